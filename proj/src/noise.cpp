#include "picket/noise.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>

namespace picket {

std::string to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::Random: return "random";
        case NoiseKind::Systematic: return "systematic";
        case NoiseKind::Realistic: return "realistic";
    }
    return "random";
}

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "random") return NoiseKind::Random;
    if (s == "systematic") return NoiseKind::Systematic;
    if (s == "realistic") return NoiseKind::Realistic;
    throw std::invalid_argument("unknown noise kind: " + s);
}

NoiseLevel noise_level_from_string(const std::string& s) {
    if (s == "low") return NoiseLevel::Low;
    if (s == "med" || s == "medium") return NoiseLevel::Medium;
    if (s == "high") return NoiseLevel::High;
    throw std::invalid_argument("unknown noise level: " + s);
}

NoiseSpec NoiseSpec::preset(NoiseLevel level, NoiseKind kind) {
    NoiseSpec spec;
    spec.kind = kind;
    switch (level) {
        case NoiseLevel::High:
            spec.beta = 0.5;
            spec.sigma1 = spec.sigma2 = 5.0;
            break;
        case NoiseLevel::Medium:
            spec.beta = 0.3;
            spec.sigma1 = spec.sigma2 = 3.0;
            break;
        case NoiseLevel::Low:
            spec.beta = 0.2;
            spec.sigma1 = spec.sigma2 = 1.0;
            break;
    }
    return spec;
}

namespace {

std::size_t cells_per_row(double beta, std::size_t t) {
    auto k = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(t)));
    return std::min(std::max<std::size_t>(k, 1), t);
}

std::vector<std::size_t> pick_rows(std::size_t n, double fraction, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    idx.resize(std::min(k, n));
    return idx;
}

std::vector<std::size_t> pick_attrs(std::size_t t, std::size_t k, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(t);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    return idx;
}

/// Flips a categorical cell to a different domain value; false when the
/// domain has no alternative.
bool flip_categorical(Cell& cell, const AttributeSpec& spec, std::mt19937_64& rng) {
    if (spec.domain.size() < 2) return false;
    std::uniform_int_distribution<std::size_t> pick(0, spec.domain.size() - 2);
    std::size_t j = pick(rng);
    int self = cell.missing ? -1 : spec.domain_id(cell.text);
    if (self >= 0 && j >= static_cast<std::size_t>(self)) ++j;
    cell = Cell::str(spec.domain[j]);
    return true;
}

bool random_cell(Cell& cell, const AttributeSpec& spec, double sigma1, std::mt19937_64& rng) {
    if (spec.kind == AttrKind::Numeric) {
        if (cell.missing) return false;
        std::normal_distribution<double> noise(0.0, sigma1);
        cell.num += noise(rng);
        return true;
    }
    return flip_categorical(cell, spec, rng);
}

std::string map_value(const AttributeSpec& spec, const std::string& v, const std::string& w,
                      std::size_t attr, std::uint64_t seed) {
    if (spec.domain.size() < 2) return v;
    std::size_t h = std::hash<std::string>{}(v + "\x1f" + w) ^ (seed + 0x9e3779b97f4a7c15ULL * (attr + 1));
    std::size_t j = h % spec.domain.size();
    if (spec.domain[j] == v) j = (j + 1) % spec.domain.size();
    return spec.domain[j];
}

bool realistic_cell(Cell& cell, const AttributeSpec& spec, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (spec.kind == AttrKind::Numeric) {
        if (cell.missing) return false;
        double u = u01(rng);
        if (u < 1.0 / 3.0)
            cell.num *= 10.0;
        else if (u < 2.0 / 3.0)
            cell.num *= 0.1;
        else
            cell = Cell::none();
        return true;
    }
    if (cell.missing || cell.text.empty() || u01(rng) >= 0.5) {
        bool changed = !cell.missing;
        cell = Cell::none();
        return changed;
    }
    std::uniform_int_distribution<std::size_t> pos(0, cell.text.size() - 1);
    std::size_t p = pos(rng);
    std::uniform_int_distribution<int> letter(0, 24);
    char old = cell.text[p];
    char repl = static_cast<char>('a' + letter(rng));
    if (repl == old) repl = static_cast<char>(repl == 'z' ? 'a' : repl + 1);
    cell.text[p] = repl;
    return true;
}

}  // namespace

CorruptResult corrupt_random(const Dataset& ds, const NoiseSpec& spec) {
    CorruptResult out;
    out.data = ds;
    out.data.ledger.reset(ds.n(), ds.t());
    std::mt19937_64 rng(spec.seed);
    std::size_t k = cells_per_row(spec.beta, ds.t());
    for (std::size_t r : pick_rows(ds.n(), spec.row_fraction, rng)) {
        for (std::size_t a : pick_attrs(ds.t(), k, rng)) {
            if (random_cell(out.data.rows[r][a], ds.schema[a], spec.sigma1, rng))
                out.data.ledger.mark(r, a);
        }
    }
    return out;
}

CorruptResult corrupt_systematic(const Dataset& ds, const NoiseSpec& spec) {
    CorruptResult out;
    out.data = ds;
    out.data.ledger.reset(ds.n(), ds.t());
    std::mt19937_64 rng(spec.seed);

    out.map.shift = spec.sigma2;
    out.map.partner.resize(ds.t());
    out.map.phi.resize(ds.t());
    for (std::size_t a = 0; a < ds.t(); ++a) {
        if (ds.t() == 1) {
            out.map.partner[a] = a;
            continue;
        }
        std::uniform_int_distribution<std::size_t> pick(0, ds.t() - 2);
        std::size_t j = pick(rng);
        if (j >= a) ++j;
        out.map.partner[a] = j;
    }

    std::size_t k = cells_per_row(spec.beta, ds.t());
    for (std::size_t r : pick_rows(ds.n(), spec.row_fraction, rng)) {
        for (std::size_t a : pick_attrs(ds.t(), k, rng)) {
            Cell& cell = out.data.rows[r][a];
            if (ds.schema[a].kind == AttrKind::Numeric) {
                if (cell.missing) continue;
                cell.num += spec.sigma2;
                out.data.ledger.mark(r, a);
                continue;
            }
            if (cell.missing || ds.schema[a].domain.size() < 2) continue;
            std::size_t j = out.map.partner[a];
            const Cell& pc = out.data.rows[r][j];
            std::string w = pc.missing ? std::string()
                            : ds.schema[j].kind == AttrKind::Numeric ? std::to_string(pc.num)
                                                                     : pc.text;
            auto key = std::make_pair(cell.text, w);
            auto it = out.map.phi[a].find(key);
            if (it == out.map.phi[a].end())
                it = out.map.phi[a]
                         .emplace(key, map_value(ds.schema[a], cell.text, w, a, spec.seed))
                         .first;
            if (it->second == cell.text) continue;
            cell = Cell::str(it->second);
            out.data.ledger.mark(r, a);
        }
    }
    return out;
}

CorruptResult corrupt_realistic(const Dataset& ds, const NoiseSpec& spec) {
    CorruptResult out;
    out.data = ds;
    out.data.ledger.reset(ds.n(), ds.t());
    std::mt19937_64 rng(spec.seed);
    std::size_t k = cells_per_row(spec.beta, ds.t());
    for (std::size_t r : pick_rows(ds.n(), spec.row_fraction, rng)) {
        for (std::size_t a : pick_attrs(ds.t(), k, rng)) {
            if (realistic_cell(out.data.rows[r][a], ds.schema[a], rng)) out.data.ledger.mark(r, a);
        }
    }
    return out;
}

CorruptResult corrupt(const Dataset& ds, const NoiseSpec& spec) {
    switch (spec.kind) {
        case NoiseKind::Random: return corrupt_random(ds, spec);
        case NoiseKind::Systematic: return corrupt_systematic(ds, spec);
        case NoiseKind::Realistic: return corrupt_realistic(ds, spec);
    }
    throw std::invalid_argument("unknown noise kind");
}

std::vector<std::size_t> corrupt_row(std::vector<Cell>& row, const Dataset& schema_source,
                                     const NoiseSpec& spec, std::uint64_t seed) {
    if (spec.kind == NoiseKind::Systematic)
        throw std::invalid_argument("corrupt_row supports random and realistic noise only");
    std::mt19937_64 rng(seed);
    std::size_t t = schema_source.t();
    std::vector<std::size_t> corrupted;
    std::size_t k = cells_per_row(spec.beta, t);
    for (std::size_t a : pick_attrs(t, k, rng)) {
        bool hit = spec.kind == NoiseKind::Random
                       ? random_cell(row[a], schema_source.schema[a], spec.sigma1, rng)
                       : realistic_cell(row[a], schema_source.schema[a], rng);
        if (hit) corrupted.push_back(a);
    }
    std::sort(corrupted.begin(), corrupted.end());
    return corrupted;
}

Dataset synth_gaussian_linear(std::size_t t, std::size_t r, std::size_t n, std::uint64_t seed) {
    if (t == 0 || n == 0 || r == 0) throw std::invalid_argument("synthetic sizes must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<double> a(t * r);
    for (double& v : a) v = uniform(rng);

    Dataset ds;
    ds.schema.resize(t);
    for (std::size_t i = 0; i < t; ++i) {
        ds.schema[i].name = "x" + std::to_string(i);
        ds.schema[i].kind = AttrKind::Numeric;
    }
    ds.rows.resize(n);
    std::vector<double> z(r);
    for (std::size_t row = 0; row < n; ++row) {
        for (double& v : z) v = gauss(rng);
        ds.rows[row].resize(t);
        for (std::size_t i = 0; i < t; ++i) {
            double x = 0.0;
            for (std::size_t j = 0; j < r; ++j) x += a[i * r + j] * z[j];
            ds.rows[row][i] = Cell::numeric(x);
        }
    }
    return ds;
}

Dataset synth_labeled_task(std::size_t t, std::size_t r, std::size_t n, std::uint64_t seed) {
    Dataset ds = synth_gaussian_linear(t, r, n, seed);
    std::mt19937_64 rng(seed ^ 0x5bf0a8b1c3d2e4f5ULL);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    std::normal_distribution<double> eta(0.0, 0.1);
    std::vector<double> w(t);
    for (double& v : w) v = uniform(rng);
    ds.labels.resize(n);
    ds.label_names = {"0", "1"};
    ds.label_column = "y";
    for (std::size_t row = 0; row < n; ++row) {
        double s = eta(rng);
        for (std::size_t i = 0; i < t; ++i) s += w[i] * ds.rows[row][i].num;
        ds.labels[row] = s > 0.0 ? 1 : 0;
    }
    return ds;
}

}  // namespace picket

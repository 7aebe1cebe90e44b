#include "picket/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace picket {

using nlohmann::json;

std::string to_string(AttrKind k) {
    switch (k) {
        case AttrKind::Numeric: return "numeric";
        case AttrKind::Categorical: return "categorical";
        case AttrKind::Text: return "text";
    }
    return "?";
}

AttrKind attr_kind_from_string(const std::string& s) {
    if (s == "numeric") return AttrKind::Numeric;
    if (s == "categorical") return AttrKind::Categorical;
    if (s == "text") return AttrKind::Text;
    throw std::invalid_argument("unknown column kind: " + s);
}

void AttributeSpec::index_domain() {
    domain_index.clear();
    for (std::size_t i = 0; i < domain.size(); ++i) domain_index[domain[i]] = static_cast<int>(i);
}

int AttributeSpec::domain_id(const std::string& v) const {
    auto it = domain_index.find(v);
    return it == domain_index.end() ? -1 : it->second;
}

void Ledger::reset(std::size_t n, std::size_t t) {
    cells.assign(n, std::vector<std::uint8_t>(t, 0));
    rows.assign(n, 0);
}

void Ledger::mark(std::size_t row, std::size_t col) {
    cells[row][col] = 1;
    rows[row] = 1;
}

void Dataset::refresh_domains() {
    for (std::size_t c = 0; c < schema.size(); ++c) {
        auto& spec = schema[c];
        if (spec.kind == AttrKind::Numeric) continue;
        spec.domain.clear();
        spec.domain_index.clear();
        for (const auto& row : rows) {
            const Cell& cell = row[c];
            if (cell.missing) continue;
            if (!spec.domain_index.count(cell.text)) {
                spec.domain_index[cell.text] = static_cast<int>(spec.domain.size());
                spec.domain.push_back(cell.text);
            }
        }
    }
}

void Dataset::check() const {
    for (const auto& row : rows)
        if (row.size() != schema.size()) throw std::runtime_error("ragged row in dataset");
    if (!labels.empty() && labels.size() != rows.size())
        throw std::runtime_error("label count does not match row count");
    if (!ledger.empty()) {
        if (ledger.rows.size() != rows.size() || ledger.cells.size() != rows.size())
            throw std::runtime_error("ledger dimensions do not match dataset");
        for (const auto& r : ledger.cells)
            if (r.size() != schema.size()) throw std::runtime_error("ledger width mismatch");
    }
}

namespace {

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, any = false;
    char ch;
    while (in.get(ch)) {
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
            any = true;
            continue;
        }
        switch (ch) {
            case '"': quoted = true; any = true; break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                any = true;
                break;
            case '\r': break;
            case '\n':
                if (any || !record.empty()) {
                    record.push_back(std::move(field));
                    field.clear();
                    out.push_back(std::move(record));
                    record.clear();
                    any = false;
                }
                break;
            default: field += ch; any = true; break;
        }
    }
    if (any || !record.empty()) {
        record.push_back(std::move(field));
        out.push_back(std::move(record));
    }
    return out;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    out += '"';
    return out;
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct SchemaColumn {
    std::string name;
    AttrKind kind;
    bool label = false;
};

std::vector<SchemaColumn> parse_schema_json(const std::string& text) {
    json j = json::parse(text);
    std::vector<SchemaColumn> cols;
    for (const auto& c : j.at("columns")) {
        SchemaColumn sc;
        sc.name = c.at("name").get<std::string>();
        sc.kind = attr_kind_from_string(c.at("kind").get<std::string>());
        sc.label = c.value("label", false);
        cols.push_back(std::move(sc));
    }
    return cols;
}

}  // namespace

Dataset dataset_from_csv_text(const std::string& csv_text, const std::string& schema_json) {
    std::istringstream in(csv_text);
    auto table = parse_csv(in);
    if (table.empty()) throw std::runtime_error("empty CSV");
    auto cols = parse_schema_json(schema_json);

    const auto& header = table.front();
    std::vector<int> col_of(cols.size(), -1);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        for (std::size_t h = 0; h < header.size(); ++h)
            if (header[h] == cols[i].name) col_of[i] = static_cast<int>(h);
        if (col_of[i] < 0) throw std::runtime_error("schema column not in CSV: " + cols[i].name);
    }

    Dataset ds;
    int label_idx = -1;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i].label) {
            if (label_idx >= 0) throw std::runtime_error("multiple label columns");
            label_idx = static_cast<int>(i);
            ds.label_column = cols[i].name;
            continue;
        }
        AttributeSpec spec;
        spec.name = cols[i].name;
        spec.kind = cols[i].kind;
        ds.schema.push_back(std::move(spec));
    }

    std::unordered_map<std::string, int> label_map;
    for (std::size_t r = 1; r < table.size(); ++r) {
        const auto& rec = table[r];
        if (rec.size() != header.size())
            throw std::runtime_error("ragged row at line " + std::to_string(r + 1));
        std::vector<Cell> row;
        row.reserve(ds.schema.size());
        for (std::size_t i = 0; i < cols.size(); ++i) {
            const std::string& raw = rec[static_cast<std::size_t>(col_of[i])];
            if (static_cast<int>(i) == label_idx) {
                auto [it, inserted] = label_map.emplace(raw, static_cast<int>(ds.label_names.size()));
                if (inserted) ds.label_names.push_back(raw);
                ds.labels.push_back(it->second);
                continue;
            }
            if (raw.empty()) {
                row.push_back(Cell::none());
            } else if (cols[i].kind == AttrKind::Numeric) {
                try {
                    std::size_t pos = 0;
                    double v = std::stod(raw, &pos);
                    if (pos != raw.size()) throw std::invalid_argument(raw);
                    row.push_back(Cell::numeric(v));
                } catch (const std::exception&) {
                    throw std::runtime_error("non-numeric value '" + raw + "' in numeric column " +
                                             cols[i].name);
                }
            } else {
                row.push_back(Cell::str(raw));
            }
        }
        ds.rows.push_back(std::move(row));
    }
    ds.refresh_domains();
    build_text_vocab(ds);
    ds.check();
    return ds;
}

Dataset load_csv(const std::string& csv_path, const std::string& schema_path) {
    std::ifstream cf(csv_path);
    if (!cf) throw std::runtime_error("cannot open CSV: " + csv_path);
    std::ifstream sf(schema_path);
    if (!sf) throw std::runtime_error("cannot open schema: " + schema_path);
    std::stringstream cbuf, sbuf;
    cbuf << cf.rdbuf();
    sbuf << sf.rdbuf();
    return dataset_from_csv_text(cbuf.str(), sbuf.str());
}

std::string dataset_to_csv_text(const Dataset& ds) {
    std::ostringstream os;
    for (std::size_t c = 0; c < ds.schema.size(); ++c) {
        if (c) os << ',';
        os << csv_escape(ds.schema[c].name);
    }
    if (ds.labeled()) os << ',' << csv_escape(ds.label_column.empty() ? "label" : ds.label_column);
    os << '\n';
    for (std::size_t r = 0; r < ds.n(); ++r) {
        for (std::size_t c = 0; c < ds.t(); ++c) {
            if (c) os << ',';
            const Cell& cell = ds.rows[r][c];
            if (cell.missing) continue;
            if (ds.schema[c].kind == AttrKind::Numeric)
                os << format_number(cell.num);
            else
                os << csv_escape(cell.text);
        }
        if (ds.labeled()) os << ',' << csv_escape(ds.label_names[ds.labels[r]]);
        os << '\n';
    }
    return os.str();
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write: " + path);
    f << dataset_to_csv_text(ds);
}

void save_ledger(const Ledger& ledger, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write: " + path);
    for (std::size_t r = 0; r < ledger.cells.size(); ++r) {
        for (std::size_t c = 0; c < ledger.cells[r].size(); ++c) {
            if (c) f << ',';
            f << int(ledger.cells[r][c]);
        }
        f << '\n';
    }
}

Dataset normalize_numeric(Dataset ds) {
    for (std::size_t c = 0; c < ds.t(); ++c) {
        auto& spec = ds.schema[c];
        if (spec.kind != AttrKind::Numeric) continue;
        double sum = 0.0;
        std::size_t cnt = 0;
        for (const auto& row : ds.rows)
            if (!row[c].missing) {
                sum += row[c].num;
                ++cnt;
            }
        if (cnt == 0) {
            spec.mean = 0.0;
            spec.stddev = 1.0;
            spec.normalized = true;
            continue;
        }
        double mean = sum / static_cast<double>(cnt);
        double ss = 0.0;
        for (const auto& row : ds.rows)
            if (!row[c].missing) ss += (row[c].num - mean) * (row[c].num - mean);
        double sd = std::sqrt(ss / static_cast<double>(cnt));  // population convention
        if (sd == 0.0) sd = 1.0;
        spec.mean = mean;
        spec.stddev = sd;
        spec.normalized = true;
        for (auto& row : ds.rows)
            if (!row[c].missing) row[c].num = (row[c].num - mean) / sd;
    }
    return ds;
}

double denormalize_value(const AttributeSpec& spec, double v) {
    return spec.normalized ? v * spec.stddev + spec.mean : v;
}

Dataset subset_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.schema = ds.schema;
    out.label_names = ds.label_names;
    out.label_column = ds.label_column;
    out.rows.reserve(idx.size());
    if (!ds.ledger.empty()) out.ledger.reset(idx.size(), ds.t());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        std::size_t i = idx[k];
        if (i >= ds.n()) throw std::out_of_range("subset_rows: index out of range");
        out.rows.push_back(ds.rows[i]);
        if (ds.labeled()) out.labels.push_back(ds.labels[i]);
        if (!ds.ledger.empty()) {
            out.ledger.cells[k] = ds.ledger.cells[i];
            out.ledger.rows[k] = ds.ledger.rows[i];
        }
    }
    return out;
}

Dataset concat_rows(const Dataset& a, const Dataset& b) {
    if (a.t() != b.t()) throw std::invalid_argument("concat_rows: schema width mismatch");
    Dataset out = a;
    bool ledgered = !a.ledger.empty() || !b.ledger.empty();
    if (ledgered && out.ledger.empty()) out.ledger.reset(a.n(), a.t());
    for (std::size_t i = 0; i < b.n(); ++i) {
        out.rows.push_back(b.rows[i]);
        if (a.labeled() || b.labeled()) {
            if (!b.labeled()) throw std::invalid_argument("concat_rows: label mismatch");
            out.labels.push_back(b.labels[i]);
        }
        if (ledgered) {
            if (!b.ledger.empty()) {
                out.ledger.cells.push_back(b.ledger.cells[i]);
                out.ledger.rows.push_back(b.ledger.rows[i]);
            } else {
                out.ledger.cells.emplace_back(a.t(), 0);
                out.ledger.rows.push_back(0);
            }
        }
    }
    out.refresh_domains();
    return out;
}

Dataset undersample_balance(Dataset ds, double majority_threshold, std::uint64_t seed) {
    if (!ds.labeled()) throw std::invalid_argument("undersample_balance: labels required");
    if (majority_threshold <= 0.5 || majority_threshold >= 1.0)
        throw std::invalid_argument("undersample_balance: threshold must be in (0.5, 1)");
    std::vector<std::size_t> counts(ds.label_names.size(), 0);
    for (int y : ds.labels) counts[static_cast<std::size_t>(y)]++;
    std::size_t maj = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[maj]) maj = c;
    double frac = static_cast<double>(counts[maj]) / static_cast<double>(ds.n());
    if (frac <= majority_threshold) return ds;

    std::size_t target = 0;
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (c != maj) target = std::max(target, counts[c]);

    std::vector<std::size_t> majority_rows;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (static_cast<std::size_t>(ds.labels[i]) == maj) majority_rows.push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(majority_rows.begin(), majority_rows.end(), rng);
    majority_rows.resize(target);
    std::vector<bool> keep_majority(ds.n(), false);
    for (std::size_t i : majority_rows) keep_majority[i] = true;

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (static_cast<std::size_t>(ds.labels[i]) != maj || keep_majority[i]) keep.push_back(i);
    return subset_rows(ds, keep);
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double train_fraction,
                                             std::uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw std::invalid_argument("split_train_test: fraction must be in (0,1)");
    if (ds.n() < 2) throw std::invalid_argument("split_train_test: need at least 2 rows");
    std::vector<std::size_t> idx(ds.n());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t ntrain = static_cast<std::size_t>(std::llround(train_fraction * ds.n()));
    ntrain = std::min(std::max<std::size_t>(ntrain, 1), ds.n() - 1);
    std::vector<std::size_t> tr(idx.begin(), idx.begin() + ntrain);
    std::vector<std::size_t> te(idx.begin() + ntrain, idx.end());
    return {subset_rows(ds, tr), subset_rows(ds, te)};
}

std::vector<std::string> tokenize_text(const std::string& s) {
    std::vector<std::string> toks;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            toks.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) toks.push_back(cur);
    return toks;
}

double sif_weight(double token_probability, double a) { return a / (a + token_probability); }

void build_text_vocab(Dataset& ds) {
    for (std::size_t c = 0; c < ds.t(); ++c) {
        auto& spec = ds.schema[c];
        if (spec.kind != AttrKind::Text) continue;
        spec.vocab.clear();
        spec.vocab_index.clear();
        spec.vocab_total = 0;
        for (const auto& row : ds.rows) {
            if (row[c].missing) continue;
            for (const auto& tok : tokenize_text(row[c].text)) {
                auto it = spec.vocab_index.find(tok);
                if (it == spec.vocab_index.end()) {
                    spec.vocab_index[tok] = static_cast<int>(spec.vocab.size());
                    spec.vocab.emplace_back(tok, 1);
                } else {
                    spec.vocab[static_cast<std::size_t>(it->second)].second++;
                }
                spec.vocab_total++;
            }
        }
    }
}

std::string schema_to_json(const std::vector<AttributeSpec>& schema) {
    json out = json::array();
    for (const auto& s : schema) {
        json j;
        j["name"] = s.name;
        j["kind"] = to_string(s.kind);
        j["domain"] = s.domain;
        json vocab = json::array();
        for (const auto& [tok, cnt] : s.vocab) vocab.push_back({tok, cnt});
        j["vocab"] = vocab;
        j["vocab_total"] = s.vocab_total;
        j["mean"] = s.mean;
        j["stddev"] = s.stddev;
        j["normalized"] = s.normalized;
        out.push_back(std::move(j));
    }
    return out.dump();
}

std::vector<AttributeSpec> schema_from_json(const std::string& text) {
    std::vector<AttributeSpec> out;
    for (const auto& j : json::parse(text)) {
        AttributeSpec s;
        s.name = j.at("name").get<std::string>();
        s.kind = attr_kind_from_string(j.at("kind").get<std::string>());
        s.domain = j.at("domain").get<std::vector<std::string>>();
        for (const auto& e : j.at("vocab"))
            s.vocab.emplace_back(e.at(0).get<std::string>(), e.at(1).get<long>());
        for (std::size_t i = 0; i < s.vocab.size(); ++i)
            s.vocab_index[s.vocab[i].first] = static_cast<int>(i);
        s.vocab_total = j.at("vocab_total").get<long>();
        s.mean = j.at("mean").get<double>();
        s.stddev = j.at("stddev").get<double>();
        s.normalized = j.at("normalized").get<bool>();
        s.index_domain();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace picket

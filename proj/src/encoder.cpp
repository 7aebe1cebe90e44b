#include "picket/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace picket {

namespace {
std::string table_name(std::size_t attr, const AttributeSpec& spec) {
    return (spec.kind == AttrKind::Text ? "tok/att" : "emb/att") + std::to_string(attr);
}
}  // namespace

TupleEncoder::TupleEncoder(std::vector<AttributeSpec> schema, int d_model)
    : schema_(std::move(schema)), d_model_(d_model) {}

void TupleEncoder::register_params(ParamStore& params, std::mt19937_64& rng) {
    double init_std = 1.0 / std::sqrt(static_cast<double>(d_model_));
    if (!params.has("mask"))
        params.create("mask", 1, static_cast<std::size_t>(d_model_), init_std, rng);
    for (std::size_t a = 0; a < schema_.size(); ++a) {
        const auto& spec = schema_[a];
        if (spec.kind == AttrKind::Numeric) continue;
        std::size_t rows = spec.kind == AttrKind::Categorical ? spec.domain.size() + 1
                                                              : spec.vocab.size() + 1;  // +UNK
        params.create(table_name(a, spec), rows, static_cast<std::size_t>(d_model_), init_std, rng);
    }
    attach(params);
}

void TupleEncoder::attach(ParamStore& params) {
    mask_ = params.get("mask");
    tables_.assign(schema_.size(), nullptr);
    parents_.clear();
    parents_.push_back(mask_);
    parent_of_.assign(schema_.size(), -1);
    for (std::size_t a = 0; a < schema_.size(); ++a) {
        if (schema_[a].kind == AttrKind::Numeric) continue;
        tables_[a] = params.get(table_name(a, schema_[a]));
        parent_of_[a] = static_cast<int>(parents_.size());
        parents_.push_back(tables_[a]);
    }
}

std::vector<TupleEncoder::Piece> TupleEncoder::cell_pieces(std::size_t attr, const Cell& cell,
                                                           double* numeric_out) const {
    const auto& spec = schema_[attr];
    *numeric_out = 0.0;
    if (cell.missing) return {{0, 0, 1.0}};  // mask vector stands in for missing
    if (spec.kind == AttrKind::Numeric) {
        *numeric_out = cell.num;
        return {};
    }
    std::size_t parent = static_cast<std::size_t>(parent_of_[attr]);
    if (spec.kind == AttrKind::Categorical) {
        int id = spec.domain_id(cell.text);
        std::size_t row = id >= 0 ? static_cast<std::size_t>(id) : spec.domain.size();  // UNK
        return {{parent, row, 1.0}};
    }
    // Text: SIF-weighted mean of token vectors.
    auto toks = tokenize_text(cell.text);
    if (toks.empty()) return {};
    std::vector<Piece> pieces;
    double wsum = 0.0;
    for (const auto& tok : toks) {
        auto it = spec.vocab_index.find(tok);
        double p = 0.0;
        std::size_t row = spec.vocab.size();  // UNK
        if (it != spec.vocab_index.end()) {
            row = static_cast<std::size_t>(it->second);
            p = spec.vocab_total > 0
                    ? static_cast<double>(spec.vocab[row].second) / static_cast<double>(spec.vocab_total)
                    : 0.0;
        }
        double w = sif_weight(p);
        pieces.push_back({parent, row, w});
        wsum += w;
    }
    for (auto& pc : pieces) pc.weight /= wsum;
    return pieces;
}

Var TupleEncoder::encode_batch(const std::vector<const std::vector<Cell>*>& items,
                               const std::vector<int>& mask_slots) const {
    if (items.size() != mask_slots.size())
        throw std::invalid_argument("encode_batch: items/mask_slots size mismatch");
    std::size_t t = schema_.size();
    Tensor constants(items.size() * t, static_cast<std::size_t>(d_model_));
    std::vector<std::vector<RowRef>> refs(constants.rows());
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& row = *items[i];
        if (row.size() != t) throw std::invalid_argument("encode_batch: tuple width mismatch");
        for (std::size_t a = 0; a < t; ++a) {
            std::size_t out_row = i * t + a;
            if (static_cast<int>(a) == mask_slots[i]) {
                refs[out_row].push_back({0, 0, 1.0});
                continue;
            }
            double num = 0.0;
            for (const auto& pc : cell_pieces(a, row[a], &num))
                refs[out_row].push_back({pc.parent, pc.row, pc.weight});
            constants.at(out_row, 0) += num;
        }
    }
    return assemble_rows(std::move(constants), std::move(refs), parents_);
}

Var TupleEncoder::encode_candidates(std::size_t attr, const std::vector<std::string>& values) const {
    Tensor constants(values.size(), static_cast<std::size_t>(d_model_));
    std::vector<std::vector<RowRef>> refs(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        double num = 0.0;
        for (const auto& pc : cell_pieces(attr, Cell::str(values[i]), &num))
            refs[i].push_back({pc.parent, pc.row, pc.weight});
    }
    return assemble_rows(std::move(constants), std::move(refs), parents_);
}

Tensor TupleEncoder::encode_tuple(const std::vector<Cell>& row, int mask_slot) const {
    auto v = encode_batch({&row}, {mask_slot});
    return v->value;
}

}  // namespace picket

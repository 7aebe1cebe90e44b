#pragma once

#include "picket/autodiff.hpp"
#include "picket/data.hpp"
#include "picket/params.hpp"

namespace picket {

/// Maps tuples of mixed-type cells to the model's input rows. Numeric cells
/// become [value, 0, ..., 0]; categorical cells a trainable lookup vector;
/// text cells a SIF-weighted mean of trainable token vectors. The masked slot
/// and missing cells use a shared trainable mask vector. Unseen values map to
/// a per-attribute UNK vector.
class TupleEncoder {
public:
    TupleEncoder() = default;
    TupleEncoder(std::vector<AttributeSpec> schema, int d_model);

    void register_params(ParamStore& params, std::mt19937_64& rng);
    void attach(ParamStore& params);  // rebind to already-created tables

    int d_model() const { return d_model_; }
    std::size_t t() const { return schema_.size(); }
    const std::vector<AttributeSpec>& schema() const { return schema_; }

    /// Batched input assembly: one output row per (item, attribute), item-major.
    /// mask_slots[i] < 0 means no masking for item i.
    Var encode_batch(const std::vector<const std::vector<Cell>*>& items,
                     const std::vector<int>& mask_slots) const;

    /// Encodings of candidate values of one attribute, one row per value.
    Var encode_candidates(std::size_t attr, const std::vector<std::string>& values) const;

    /// Single-tuple encoding materialized as a T x d_model matrix (test/debug).
    Tensor encode_tuple(const std::vector<Cell>& row, int mask_slot) const;

    Var mask_vector() const { return mask_; }

private:
    struct Piece {
        std::size_t parent;  // index into parents_
        std::size_t row;
        double weight;
    };
    std::vector<Piece> cell_pieces(std::size_t attr, const Cell& cell, double* numeric_out) const;

    std::vector<AttributeSpec> schema_;
    int d_model_ = 0;
    Var mask_;
    std::vector<Var> tables_;       // per attribute: value or token table (or null)
    std::vector<Var> parents_;      // [mask, non-null tables...]
    std::vector<int> parent_of_;    // attr -> index into parents_, -1 if none
};

}  // namespace picket

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "picket/data.hpp"
#include "picket/tensor.hpp"

namespace picket {

enum class DownstreamFamily { LR, LinearSVM, MLP };

std::string to_string(DownstreamFamily f);
DownstreamFamily downstream_family_from_string(const std::string& s);

struct DownstreamSpec {
    DownstreamFamily family = DownstreamFamily::LR;
    double regularization = 1.0;          // inverse penalty C
    std::vector<int> hidden = {100, 100};  // MLP layer sizes
    int max_epochs = 5000;
    double gradient_tolerance = 1e-6;
    int mlp_epochs = 300;
    double mlp_learning_rate = 1e-3;

    static DownstreamSpec poisoning_mlp();  // one hidden layer of size 10
};

/// Shared feature encoding for downstream models and victim detectors:
/// numeric raw with mean imputation, categorical one-hot with an explicit
/// missing column, text as a SIF-weighted mean of fixed seeded token vectors.
class DownstreamEncoder {
public:
    DownstreamEncoder() = default;
    static DownstreamEncoder fit(const Dataset& ds, std::uint64_t seed, int text_dim = 16);

    std::vector<double> encode(const std::vector<Cell>& row) const;
    Tensor encode_all(const Dataset& ds) const;

    std::size_t dim() const { return dim_; }
    std::size_t t() const { return schema_.size(); }
    const std::vector<AttributeSpec>& schema() const { return schema_; }
    bool all_numeric() const;

    /// Feature offset of attribute a (numeric attributes occupy one slot).
    std::size_t offset(std::size_t a) const { return offset_[a]; }

    std::string to_json() const;
    static DownstreamEncoder from_json(const std::string& text);

private:
    std::vector<AttributeSpec> schema_;
    std::vector<std::size_t> offset_;
    std::vector<double> impute_mean_;          // per attribute, numeric only
    std::vector<std::vector<double>> token_;   // flattened (vocab x text_dim), text only
    int text_dim_ = 16;
    std::size_t dim_ = 0;
};

class DownstreamModel {
public:
    DownstreamModel() = default;

    static DownstreamModel fit(const DownstreamSpec& spec, const Dataset& train,
                               std::uint64_t seed);
    /// Variant with a caller-provided encoder (kept fixed), used when the
    /// training set is a filtered subset of a larger corpus.
    static DownstreamModel fit_encoded(const DownstreamSpec& spec, const DownstreamEncoder& enc,
                                       const Dataset& train, std::uint64_t seed);

    int predict(const std::vector<Cell>& row) const;
    int predict_features(const std::vector<double>& x) const;
    std::vector<double> scores(const std::vector<double>& x) const;

    /// d loss / d features at (x, y); loss is the model's training loss term
    /// for a single point (cross-entropy for LR and MLP, hinge for the SVM).
    std::vector<double> input_gradient(const std::vector<double>& x, int y) const;

    double accuracy(const Dataset& test) const;

    const DownstreamEncoder& encoder() const { return encoder_; }
    DownstreamFamily family() const { return spec_.family; }
    const DownstreamSpec& spec() const { return spec_; }
    int classes() const { return classes_; }
    const std::vector<Tensor>& weights() const { return weights_; }
    const std::vector<Tensor>& biases() const { return biases_; }

    std::string to_json() const;
    static DownstreamModel from_json(const std::string& text);

private:
    DownstreamSpec spec_;
    DownstreamEncoder encoder_;
    int classes_ = 0;
    // Linear families store one (classes, dim) weight matrix and (1, classes)
    // bias; the MLP stores one pair per layer.
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

/// Plain multinomial logistic regression on an already-encoded matrix.
/// Shared by the downstream LR family and the victim detectors.
struct LogisticFit {
    Tensor w;  // (classes, dim)
    Tensor b;  // (1, classes)
    double final_loss = 0.0;
};
LogisticFit fit_logistic(const Tensor& x, const std::vector<int>& y, int classes, double c,
                         int max_epochs, double tolerance);

}  // namespace picket

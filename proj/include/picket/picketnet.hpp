#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "picket/data.hpp"
#include "picket/encoder.hpp"
#include "picket/params.hpp"

namespace picket {

enum class StreamMode { Both, ValueOnly, SchemaOnly };

std::string to_string(StreamMode m);
StreamMode stream_mode_from_string(const std::string& s);

struct PicketNetConfig {
    int layers = 6;
    int heads = 2;
    int d_model = 64;
    int ffn_hidden_layers = 1;
    int ffn_hidden = 64;
    double dropout = 0.1;
    int negatives = 4;
    int warm_epochs = 50;    // E1
    int record_epochs = 20;  // E2
    int batch_size = 32;
    StreamMode stream_mode = StreamMode::Both;

    /// Purely numeric data uses a narrower model.
    static PicketNetConfig numeric_preset();
    /// Narrow single-layer variant for simple numeric tasks.
    static PicketNetConfig numeric_small();

    std::string to_json() const;
    static PicketNetConfig from_json(const std::string& text);
};

/// Per-(row, attribute) reconstruction losses over a window of epochs.
struct LossRecord {
    std::size_t n = 0, t = 0, epochs = 0;
    std::vector<double> data;

    void reset(std::size_t n_, std::size_t t_, std::size_t epochs_) {
        n = n_;
        t = t_;
        epochs = epochs_;
        data.assign(n * t * epochs, 0.0);
    }
    double& at(std::size_t row, std::size_t attr, std::size_t epoch) {
        return data[(row * t + attr) * epochs + epoch];
    }
    double at(std::size_t row, std::size_t attr, std::size_t epoch) const {
        return data[(row * t + attr) * epochs + epoch];
    }
    double average(std::size_t row, std::size_t attr) const;
};

/// Two-stream self-attention network over tuples. The value stream attends
/// with queries from cell encodings; the schema stream with queries from
/// trainable per-layer positional encodings. Reconstruction of a masked
/// attribute is the training signal.
class PicketNet {
public:
    PicketNet(const Dataset& schema_source, PicketNetConfig cfg, std::uint64_t seed);

    /// E1 warm-up epochs followed by E2 recording epochs over all
    /// (row, attribute) maskings. Aborts on non-finite loss.
    LossRecord train(const Dataset& ds);
    void train_epochs(const Dataset& ds, int epochs);
    LossRecord record_window(const Dataset& ds, int epochs);

    /// Entry i is the reconstruction loss with attribute i masked, evaluation
    /// mode, negatives drawn from a fixed per-call seed.
    std::vector<double> loss_vector(const std::vector<Cell>& row, std::uint64_t eval_seed) const;

    /// Final representations O for one tuple, evaluation mode: (T, d) matrix.
    Tensor forward_tuple(const std::vector<Cell>& row, int mask_slot) const;

    const PicketNetConfig& config() const { return cfg_; }
    int input_dim() const { return d_; }
    int ffn_dim() const { return ffn_; }
    std::size_t t() const { return encoder_.t(); }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const TupleEncoder& encoder() const { return encoder_; }

    /// Parameters of the attention stack (projections, FFNs, layer norms,
    /// positional encodings); used for the stream-capacity parity check.
    std::size_t stack_parameter_count() const;

    std::uint64_t seed() const { return seed_; }
    void reseed_rng(std::uint64_t seed);

private:
    struct BatchItem {
        std::size_t row;
        std::size_t attr;
    };

    Var forward_rows(const std::vector<const std::vector<Cell>*>& items,
                     const std::vector<int>& mask_slots, std::mt19937_64& rng,
                     bool training) const;
    Var stream_block(const std::string& prefix, const Var& q_in, const Var& k_in, const Var& v_in,
                     std::mt19937_64& rng, bool training) const;

    /// Forward + loss for a batch; fills per-item losses. Returns scalar loss.
    Var batch_loss(const Dataset& ds, const std::vector<BatchItem>& batch, std::mt19937_64& rng,
                   bool training, std::vector<double>* item_losses) const;
    Var loss_for_items(const std::vector<const std::vector<Cell>*>& items,
                       const std::vector<int>& attrs, std::mt19937_64& rng, bool training,
                       std::vector<double>* item_losses) const;

    void run_epochs(const Dataset& ds, int epochs, LossRecord* record, int record_offset);

    PicketNetConfig cfg_;
    int d_ = 0;    // effective model width (sqrt(2)-scaled for single streams)
    int ffn_ = 0;  // effective FFN hidden width
    TupleEncoder encoder_;
    ParamStore params_;
    std::mt19937_64 rng_;
    std::uint64_t seed_ = 0;
};

}  // namespace picket

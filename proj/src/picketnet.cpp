#include "picket/picketnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace picket {

using nlohmann::json;

std::string to_string(StreamMode m) {
    switch (m) {
        case StreamMode::Both: return "both";
        case StreamMode::ValueOnly: return "value";
        case StreamMode::SchemaOnly: return "schema";
    }
    return "?";
}

StreamMode stream_mode_from_string(const std::string& s) {
    if (s == "both") return StreamMode::Both;
    if (s == "value") return StreamMode::ValueOnly;
    if (s == "schema") return StreamMode::SchemaOnly;
    throw std::invalid_argument("unknown stream mode: " + s);
}

PicketNetConfig PicketNetConfig::numeric_preset() {
    PicketNetConfig c;
    c.d_model = 8;
    c.ffn_hidden = 8;
    return c;
}

PicketNetConfig PicketNetConfig::numeric_small() {
    PicketNetConfig c = numeric_preset();
    c.layers = 1;
    return c;
}

std::string PicketNetConfig::to_json() const {
    json j{{"layers", layers},
           {"heads", heads},
           {"d_model", d_model},
           {"ffn_hidden_layers", ffn_hidden_layers},
           {"ffn_hidden", ffn_hidden},
           {"dropout", dropout},
           {"negatives", negatives},
           {"warm_epochs", warm_epochs},
           {"record_epochs", record_epochs},
           {"batch_size", batch_size},
           {"stream_mode", to_string(stream_mode)}};
    return j.dump();
}

PicketNetConfig PicketNetConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    PicketNetConfig c;
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.d_model = j.value("d_model", c.d_model);
    c.ffn_hidden_layers = j.value("ffn_hidden_layers", c.ffn_hidden_layers);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.negatives = j.value("negatives", c.negatives);
    c.warm_epochs = j.value("warm_epochs", c.warm_epochs);
    c.record_epochs = j.value("record_epochs", c.record_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.count("stream_mode")) c.stream_mode = stream_mode_from_string(j["stream_mode"]);
    return c;
}

double LossRecord::average(std::size_t row, std::size_t attr) const {
    double s = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) s += at(row, attr, e);
    return epochs ? s / static_cast<double>(epochs) : 0.0;
}

namespace {

// Parameters of one attention layer of a given width: projections, FFN
// (single hidden layer), two layer norms per stream.
std::size_t stream_params(std::size_t d, std::size_t h) {
    return 4 * d * d + (d * h + h + h * d + d) + 4 * d;
}

std::size_t layer_params_both(std::size_t d, std::size_t h, std::size_t t) {
    return 2 * stream_params(d, h) + t * d;  // + positional encoding
}

}  // namespace

PicketNet::PicketNet(const Dataset& schema_source, PicketNetConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed), seed_(seed) {
    if (cfg_.d_model % cfg_.heads != 0)
        throw std::invalid_argument("d_model must be divisible by heads");
    if (cfg_.ffn_hidden_layers != 1)
        throw std::invalid_argument("only single-hidden-layer FFNs are supported");

    std::size_t t = schema_source.t();
    if (cfg_.stream_mode == StreamMode::Both) {
        d_ = cfg_.d_model;
        ffn_ = cfg_.ffn_hidden;
    } else {
        // One pruned stream gets sqrt(2)-wider vectors so the total capacity
        // matches the two-stream stack. The FFN hidden width absorbs the
        // integer rounding so parameter counts stay within a few percent.
        double target_d = cfg_.d_model * std::sqrt(2.0);
        d_ = static_cast<int>(std::llround(target_d / cfg_.heads)) * cfg_.heads;
        if (d_ < cfg_.heads) d_ = cfg_.heads;
        std::size_t both = layer_params_both(cfg_.d_model, cfg_.ffn_hidden, t);
        std::size_t pos = cfg_.stream_mode == StreamMode::SchemaOnly ? t * d_ : 0;
        std::size_t best_h = 1;
        std::size_t best_err = static_cast<std::size_t>(-1);
        for (std::size_t h = 1; h <= 8 * static_cast<std::size_t>(cfg_.ffn_hidden) + 64; ++h) {
            std::size_t got = stream_params(static_cast<std::size_t>(d_), h) + pos;
            std::size_t err = got > both ? got - both : both - got;
            if (err < best_err) {
                best_err = err;
                best_h = h;
            }
        }
        ffn_ = static_cast<int>(best_h);
    }

    encoder_ = TupleEncoder(schema_source.schema, d_);
    encoder_.register_params(params_, rng_);

    double proj_std = 1.0 / std::sqrt(static_cast<double>(d_));
    for (int l = 0; l < cfg_.layers; ++l) {
        std::string L = "L" + std::to_string(l);
        std::vector<std::string> streams;
        if (cfg_.stream_mode != StreamMode::SchemaOnly) streams.push_back("/v/");
        if (cfg_.stream_mode != StreamMode::ValueOnly) streams.push_back("/s/");
        for (const auto& s : streams) {
            std::string p = L + s;
            for (const char* w : {"Wq", "Wk", "Wv", "Wo"})
                params_.create(p + w, d_, d_, proj_std, rng_);
            params_.create(p + "ffn/W1", d_, ffn_, proj_std, rng_);
            params_.create_zeros(p + "ffn/b1", 1, ffn_);
            params_.create(p + "ffn/W2", ffn_, d_, 1.0 / std::sqrt(static_cast<double>(ffn_)),
                           rng_);
            params_.create_zeros(p + "ffn/b2", 1, d_);
            for (const char* ln : {"ln1", "ln2"}) {
                params_.create_from(p + ln + std::string("/g"), Tensor(1, d_, 1.0));
                params_.create_zeros(p + ln + std::string("/b"), 1, d_);
            }
        }
        if (cfg_.stream_mode != StreamMode::ValueOnly)
            params_.create(L + "/pos", t, d_, proj_std, rng_);
    }

    for (std::size_t a = 0; a < t; ++a) {
        if (schema_source.schema[a].kind != AttrKind::Numeric) continue;
        std::string p = "head/att" + std::to_string(a) + "/";
        params_.create(p + "W1", d_, ffn_, proj_std, rng_);
        params_.create_zeros(p + "b1", 1, ffn_);
        params_.create(p + "W2", ffn_, 1, 1.0 / std::sqrt(static_cast<double>(ffn_)), rng_);
        params_.create_zeros(p + "b2", 1, 1);
    }
}

void PicketNet::reseed_rng(std::uint64_t seed) { rng_.seed(seed); }

std::size_t PicketNet::stack_parameter_count() const {
    std::size_t n = 0;
    params_.for_each([&](const std::string& name, const Var& v) {
        if (name.rfind("L", 0) == 0) n += v->value.size();
    });
    return n;
}

Var PicketNet::stream_block(const std::string& prefix, const Var& q_in, const Var& k_in,
                            const Var& v_in, std::mt19937_64& rng, bool training) const {
    std::size_t t = encoder_.t();
    std::size_t dh = static_cast<std::size_t>(d_ / cfg_.heads);
    Var q = matmul(q_in, params_.get(prefix + "Wq"));
    Var k = matmul(k_in, params_.get(prefix + "Wk"));
    Var v = matmul(v_in, params_.get(prefix + "Wv"));
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
        std::size_t off = static_cast<std::size_t>(h) * dh;
        heads.push_back(attention_blocks(slice_cols(q, off, dh), slice_cols(k, off, dh),
                                         slice_cols(v, off, dh), t));
    }
    Var cat = heads.size() == 1 ? heads[0] : concat_cols(heads);
    Var attn = matmul(cat, params_.get(prefix + "Wo"));
    attn = dropout(attn, cfg_.dropout, rng, training);
    Var x = layer_norm_rows(add(attn, v_in), params_.get(prefix + "ln1/g"),
                            params_.get(prefix + "ln1/b"));
    Var hidden = relu(add_row_broadcast(matmul(x, params_.get(prefix + "ffn/W1")),
                                        params_.get(prefix + "ffn/b1")));
    Var ff = add_row_broadcast(matmul(hidden, params_.get(prefix + "ffn/W2")),
                               params_.get(prefix + "ffn/b2"));
    ff = dropout(ff, cfg_.dropout, rng, training);
    return layer_norm_rows(add(ff, x), params_.get(prefix + "ln2/g"),
                           params_.get(prefix + "ln2/b"));
}

Var PicketNet::forward_rows(const std::vector<const std::vector<Cell>*>& items,
                            const std::vector<int>& mask_slots, std::mt19937_64& rng,
                            bool training) const {
    Var state = encoder_.encode_batch(items, mask_slots);
    std::size_t batch = items.size();
    for (int l = 0; l < cfg_.layers; ++l) {
        std::string L = "L" + std::to_string(l);
        Var value_out, schema_out;
        if (cfg_.stream_mode != StreamMode::SchemaOnly)
            value_out = stream_block(L + "/v/", state, state, state, rng, training);
        if (cfg_.stream_mode != StreamMode::ValueOnly) {
            Var pos = tile_rows(params_.get(L + "/pos"), batch);
            schema_out = stream_block(L + "/s/", pos, pos, state, rng, training);
        }
        switch (cfg_.stream_mode) {
            case StreamMode::Both: state = add(value_out, schema_out); break;
            case StreamMode::ValueOnly: state = value_out; break;
            case StreamMode::SchemaOnly: state = schema_out; break;
        }
    }
    return state;
}

Var PicketNet::batch_loss(const Dataset& ds, const std::vector<BatchItem>& batch,
                          std::mt19937_64& rng, bool training,
                          std::vector<double>* item_losses) const {
    std::vector<const std::vector<Cell>*> items;
    std::vector<int> attrs;
    items.reserve(batch.size());
    for (const auto& b : batch) {
        items.push_back(&ds.rows[b.row]);
        attrs.push_back(static_cast<int>(b.attr));
    }
    return loss_for_items(items, attrs, rng, training, item_losses);
}

Var PicketNet::loss_for_items(const std::vector<const std::vector<Cell>*>& items,
                              const std::vector<int>& attrs, std::mt19937_64& rng, bool training,
                              std::vector<double>* item_losses) const {
    std::size_t t = encoder_.t();
    const auto& schema = encoder_.schema();
    Var out = forward_rows(items, attrs, rng, training);

    if (item_losses) item_losses->assign(items.size(), 0.0);

    // Group items by masked attribute; each group contributes one loss vector.
    std::vector<std::vector<std::size_t>> groups(t);
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::size_t a = static_cast<std::size_t>(attrs[i]);
        if ((*items[i])[a].missing) continue;  // no reconstruction target
        groups[a].push_back(i);
    }

    Var total;
    auto accumulate = [&](const Var& group_sum) {
        total = total ? add(total, group_sum) : group_sum;
    };

    for (std::size_t a = 0; a < t; ++a) {
        const auto& grp = groups[a];
        if (grp.empty()) continue;
        std::vector<std::size_t> masked_rows;
        masked_rows.reserve(grp.size());
        for (std::size_t i : grp) masked_rows.push_back(i * t + a);

        if (schema[a].kind == AttrKind::Numeric) {
            Var o = gather_rows(out, masked_rows);
            std::string p = "head/att" + std::to_string(a) + "/";
            Var hidden = relu(add_row_broadcast(matmul(o, params_.get(p + "W1")),
                                                params_.get(p + "b1")));
            Var pred = add_row_broadcast(matmul(hidden, params_.get(p + "W2")),
                                         params_.get(p + "b2"));
            Tensor targets(grp.size(), 1);
            for (std::size_t j = 0; j < grp.size(); ++j)
                targets.at(j, 0) = (*items[grp[j]])[a].num;
            Var diff = sub(pred, constant(std::move(targets)));
            Var sq = mul(diff, diff);
            if (item_losses)
                for (std::size_t j = 0; j < grp.size(); ++j)
                    (*item_losses)[grp[j]] = sq->value.at(j, 0);
            accumulate(sum_all(sq));
        } else {
            const auto& domain = schema[a].domain;
            std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg_.negatives) + 1,
                                                  std::max<std::size_t>(domain.size(), 1));
            std::vector<std::string> candidates;
            candidates.reserve(grp.size() * k);
            std::vector<std::size_t> repeat_rows;
            repeat_rows.reserve(grp.size() * k);
            for (std::size_t j = 0; j < grp.size(); ++j) {
                const std::string& truth = (*items[grp[j]])[a].text;
                candidates.push_back(truth);
                std::vector<std::size_t> pool(domain.size());
                std::iota(pool.begin(), pool.end(), 0);
                int truth_id = schema[a].domain_id(truth);
                if (truth_id >= 0)
                    pool.erase(pool.begin() + truth_id);
                std::shuffle(pool.begin(), pool.end(), rng);
                for (std::size_t z = 0; z + 1 < k && z < pool.size(); ++z)
                    candidates.push_back(domain[pool[z]]);
                std::size_t actual = 1 + std::min<std::size_t>(k - 1, pool.size());
                for (std::size_t r = 0; r < actual; ++r)
                    repeat_rows.push_back(grp[j] * t + a);
                // pad to fixed k with the truth itself when the pool ran dry;
                // the extra copies only rescale the softmax denominator
                for (std::size_t r = actual; r < k; ++r) {
                    candidates.push_back(truth);
                    repeat_rows.push_back(grp[j] * t + a);
                }
            }
            Var cands = encoder_.encode_candidates(a, candidates);
            Var tiled = gather_rows(out, repeat_rows);
            Var sims = cosine_rows(tiled, cands);
            Var logits = reshape(sims, grp.size(), k);
            Var ce = cross_entropy_rows_target0(logits);
            if (item_losses)
                for (std::size_t j = 0; j < grp.size(); ++j)
                    (*item_losses)[grp[j]] = ce->value.at(j, 0);
            accumulate(sum_all(ce));
        }
    }
    if (!total) total = constant(Tensor::scalar(0.0));
    return scale(total, 1.0 / static_cast<double>(std::max<std::size_t>(items.size(), 1)));
}

void PicketNet::run_epochs(const Dataset& ds, int epochs, LossRecord* record, int record_offset) {
    std::size_t t = encoder_.t();
    std::vector<BatchItem> pairs;
    for (std::size_t r = 0; r < ds.n(); ++r)
        for (std::size_t a = 0; a < t; ++a)
            if (!ds.rows[r][a].missing) pairs.push_back({r, a});

    std::vector<double> item_losses;
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(pairs.begin(), pairs.end(), rng_);
        for (std::size_t begin = 0; begin < pairs.size();
             begin += static_cast<std::size_t>(cfg_.batch_size)) {
            std::size_t end = std::min(pairs.size(), begin + static_cast<std::size_t>(cfg_.batch_size));
            std::vector<BatchItem> batch(pairs.begin() + begin, pairs.begin() + end);
            params_.zero_grad();
            Var loss = batch_loss(ds, batch, rng_, true, &item_losses);
            if (!std::isfinite(loss->value.item())) {
                std::size_t bad = 0;
                for (std::size_t i = 0; i < item_losses.size(); ++i)
                    if (!std::isfinite(item_losses[i])) bad = i;
                throw std::runtime_error(
                    "non-finite loss at epoch " + std::to_string(e) + ", row " +
                    std::to_string(batch[bad].row) + ", attribute " +
                    std::to_string(batch[bad].attr));
            }
            backward(loss);
            params_.adam_step(lr_at_step(params_.step() + 1, d_));
            if (record)
                for (std::size_t i = 0; i < batch.size(); ++i)
                    record->at(batch[i].row, batch[i].attr,
                               static_cast<std::size_t>(record_offset + e)) = item_losses[i];
        }
    }
}

LossRecord PicketNet::train(const Dataset& ds) {
    run_epochs(ds, cfg_.warm_epochs, nullptr, 0);
    LossRecord rec;
    rec.reset(ds.n(), encoder_.t(), static_cast<std::size_t>(cfg_.record_epochs));
    run_epochs(ds, cfg_.record_epochs, &rec, 0);
    return rec;
}

void PicketNet::train_epochs(const Dataset& ds, int epochs) { run_epochs(ds, epochs, nullptr, 0); }

LossRecord PicketNet::record_window(const Dataset& ds, int epochs) {
    LossRecord rec;
    rec.reset(ds.n(), encoder_.t(), static_cast<std::size_t>(epochs));
    run_epochs(ds, epochs, &rec, 0);
    return rec;
}

std::vector<double> PicketNet::loss_vector(const std::vector<Cell>& row,
                                           std::uint64_t eval_seed) const {
    std::size_t t = encoder_.t();
    std::vector<const std::vector<Cell>*> items(t, &row);
    std::vector<int> attrs(t);
    std::iota(attrs.begin(), attrs.end(), 0);
    std::mt19937_64 rng(eval_seed);
    std::vector<double> losses;
    loss_for_items(items, attrs, rng, false, &losses);
    return losses;
}

Tensor PicketNet::forward_tuple(const std::vector<Cell>& row, int mask_slot) const {
    std::mt19937_64 rng(0);
    Var out = forward_rows({&row}, {mask_slot}, rng, false);
    return out->value;
}

}  // namespace picket

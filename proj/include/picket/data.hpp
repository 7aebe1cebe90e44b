#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace picket {

enum class AttrKind { Numeric, Categorical, Text };

std::string to_string(AttrKind k);
AttrKind attr_kind_from_string(const std::string& s);

/// One cell of a tuple. Numeric cells use `num`, categorical/text use `text`.
/// A missing cell has `missing` set and the other fields ignored.
struct Cell {
    double num = 0.0;
    std::string text;
    bool missing = false;

    static Cell numeric(double v) { return Cell{v, {}, false}; }
    static Cell str(std::string s) { return Cell{0.0, std::move(s), false}; }
    static Cell none() { return Cell{0.0, {}, true}; }
};

struct AttributeSpec {
    std::string name;
    AttrKind kind = AttrKind::Numeric;

    // Categorical and Text: ordered list of distinct observed values.
    std::vector<std::string> domain;
    std::unordered_map<std::string, int> domain_index;

    // Text only: token list with corpus frequencies.
    std::vector<std::pair<std::string, long>> vocab;
    std::unordered_map<std::string, int> vocab_index;
    long vocab_total = 0;

    // Numeric only, set by normalization.
    double mean = 0.0;
    double stddev = 1.0;
    bool normalized = false;

    void index_domain();
    int domain_id(const std::string& v) const;  // -1 if unseen
};

struct Ledger {
    std::vector<std::vector<std::uint8_t>> cells;  // N x T corruption flags
    std::vector<std::uint8_t> rows;                // per-row corrupted flag

    bool empty() const { return rows.empty(); }
    void reset(std::size_t n, std::size_t t);
    void mark(std::size_t row, std::size_t col);
};

struct Dataset {
    std::vector<AttributeSpec> schema;
    std::vector<std::vector<Cell>> rows;
    std::vector<int> labels;  // empty when unlabeled
    std::vector<std::string> label_names;
    std::string label_column;
    Ledger ledger;

    std::size_t n() const { return rows.size(); }
    std::size_t t() const { return schema.size(); }
    bool labeled() const { return !labels.empty(); }
    int num_classes() const { return static_cast<int>(label_names.size()); }

    /// Rebuilds domains, domain indices and label mapping from current rows.
    void refresh_domains();
    void check() const;  // invariant sweep; throws on violation
};

/// Loads a CSV with header row against a JSON schema sidecar of the form
/// {"columns":[{"name":..., "kind":"numeric|categorical|text", "label":bool}]}.
Dataset load_csv(const std::string& csv_path, const std::string& schema_path);
Dataset dataset_from_csv_text(const std::string& csv_text, const std::string& schema_json);

void save_csv(const Dataset& ds, const std::string& path);
void save_ledger(const Ledger& ledger, const std::string& path);
std::string dataset_to_csv_text(const Dataset& ds);

/// Zero-mean unit-variance scaling of numeric columns (population std, over
/// non-missing cells). Stats are recorded in the schema; a raw std of zero is
/// stored as 1.
Dataset normalize_numeric(Dataset ds);
double denormalize_value(const AttributeSpec& spec, double v);

Dataset undersample_balance(Dataset ds, double majority_threshold, std::uint64_t seed);
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double train_fraction,
                                             std::uint64_t seed);

/// Lowercased, punctuation-split token vocabulary with corpus frequencies for
/// every text attribute.
void build_text_vocab(Dataset& ds);
std::vector<std::string> tokenize_text(const std::string& s);
double sif_weight(double token_probability, double a = 1e-3);

Dataset subset_rows(const Dataset& ds, const std::vector<std::size_t>& idx);
Dataset concat_rows(const Dataset& a, const Dataset& b);

/// Full attribute snapshot (domains, vocab, normalization stats) as JSON;
/// used by checkpoints so loaded models see the exact training-time schema.
std::string schema_to_json(const std::vector<AttributeSpec>& schema);
std::vector<AttributeSpec> schema_from_json(const std::string& text);

}  // namespace picket

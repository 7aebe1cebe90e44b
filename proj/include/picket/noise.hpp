#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "picket/data.hpp"

namespace picket {

enum class NoiseKind { Random, Systematic, Realistic };
enum class NoiseLevel { Low, Medium, High };

std::string to_string(NoiseKind k);
NoiseKind noise_kind_from_string(const std::string& s);
NoiseLevel noise_level_from_string(const std::string& s);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::Random;
    double beta = 0.3;          // fraction of cells within a corrupted row
    double sigma1 = 3.0;        // random numeric noise scale
    double sigma2 = 3.0;        // systematic numeric shift
    double row_fraction = 0.2;  // fraction of corrupted rows
    std::uint64_t seed = 0;

    /// Presets: High (0.5, 5), Medium (0.3, 3), Low (0.2, 1).
    static NoiseSpec preset(NoiseLevel level, NoiseKind kind = NoiseKind::Random);
};

/// Deterministic corruption map for systematic noise. Categorical cells map
/// through phi(value, partner value); numeric cells shift by a fixed sigma2.
struct SystematicMap {
    std::vector<std::size_t> partner;  // per attribute, partner index != self
    std::vector<std::map<std::pair<std::string, std::string>, std::string>> phi;
    double shift = 0.0;
};

struct CorruptResult {
    Dataset data;  // ledger filled with corrupted cells
    SystematicMap map;
};

CorruptResult corrupt_random(const Dataset& ds, const NoiseSpec& spec);
CorruptResult corrupt_systematic(const Dataset& ds, const NoiseSpec& spec);
CorruptResult corrupt_realistic(const Dataset& ds, const NoiseSpec& spec);
CorruptResult corrupt(const Dataset& ds, const NoiseSpec& spec);

/// Corrupts the chosen cells of a single row in place (same rules as the
/// dataset-level generators). Returns the indices of corrupted attributes.
std::vector<std::size_t> corrupt_row(std::vector<Cell>& row, const Dataset& schema_source,
                                     const NoiseSpec& spec, std::uint64_t seed);

/// Numeric synthetic family: x = A z with z ~ N(0, I_R) and A entries
/// uniform on [-1, 1].
Dataset synth_gaussian_linear(std::size_t t, std::size_t r, std::size_t n, std::uint64_t seed);

/// Same generator plus a binary label sign(w . x + eta), w uniform on [-1, 1],
/// eta ~ N(0, 0.1).
Dataset synth_labeled_task(std::size_t t, std::size_t r, std::size_t n, std::uint64_t seed);

}  // namespace picket

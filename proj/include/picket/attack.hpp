#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "picket/data.hpp"
#include "picket/downstream.hpp"

namespace picket {

enum class AttackKind { FGSM, PGD, TruncatedPoison };

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackSpec {
    AttackKind kind = AttackKind::PGD;
    double epsilon = 0.2;
    double step = 0.1;
    int iterations = 100;

    static AttackSpec fgsm_augment() { return {AttackKind::FGSM, 0.1, 0.1, 1}; }
};

/// x' = x + eps * sign(grad loss); sign(0) = 0.
std::vector<double> fgsm(const DownstreamModel& model, const std::vector<double>& x, int y,
                         double epsilon);

/// Iterative ascent with per-step projection onto the infinity ball of radius
/// spec.epsilon around x.
std::vector<double> pgd(const DownstreamModel& model, const std::vector<double>& x, int y,
                        const AttackSpec& spec);

/// Row-level wrappers for all-numeric schemas: perturbs the numeric cells and
/// returns a new tuple.
std::vector<Cell> attack_row(const DownstreamModel& model, const std::vector<Cell>& row, int y,
                             const AttackSpec& spec);

struct PoisonSpec {
    std::size_t budget = 0;      // number of poison rows
    int inner_steps = 10;        // unrolled training steps per ascent round
    int outer_steps = 20;        // ascent rounds
    double inner_lr = 0.5;       // learning rate of the unrolled trainee
    double ascent_lr = 0.2;
    std::uint64_t seed = 0;
};

/// Gradient-ascent poisoning against a logistic trainee: poison rows start as
/// label-flipped training rows; each round trains the trainee a few unrolled
/// gradient steps and ascends the validation loss through them. Features are
/// clipped to the observed per-column range. A simplification of back-gradient
/// poisoning. Requires an all-numeric schema; budget must stay below 0.5 N.
Dataset truncated_poison(const Dataset& train, const Dataset& validation,
                         const PoisonSpec& spec);

}  // namespace picket

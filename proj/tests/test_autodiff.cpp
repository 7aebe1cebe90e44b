#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "picket/autodiff.hpp"
#include "picket/params.hpp"

using namespace picket;

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = g(rng);
    return t;
}

/// Central finite differences on a scalar graph builder.
template <typename F>
void check_gradients(std::vector<Tensor> inputs, F&& build, double tol = 1e-6) {
    std::vector<Var> leaves;
    for (auto& t : inputs) leaves.push_back(leaf(t));
    Var out = build(leaves);
    REQUIRE(out->value.size() == 1);
    backward(out);

    const double h = 1e-6;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        for (std::size_t i = 0; i < inputs[p].size(); ++i) {
            auto eval = [&](double delta) {
                std::vector<Var> vars;
                for (std::size_t q = 0; q < inputs.size(); ++q) {
                    Tensor t = inputs[q];
                    if (q == p) t[i] += delta;
                    vars.push_back(leaf(std::move(t)));
                }
                return build(vars)->value.item();
            };
            double numeric = (eval(h) - eval(-h)) / (2.0 * h);
            double analytic = leaves[p]->grad[i];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
            CHECK(std::abs(numeric - analytic) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise and matmul gradients match finite differences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng);
        Tensor c = random_tensor(4, 2, rng);
        check_gradients({a, b, c}, [](const std::vector<Var>& v) {
            Var x = mul(add(v[0], v[1]), sub(v[0], scale(v[1], 0.5)));
            return sum_all(matmul(x, v[2]));
        });
    }
}

TEST_CASE("activation gradients match finite differences") {
    std::mt19937_64 rng(12);
    Tensor a = random_tensor(4, 5, rng);
    // keep relu inputs away from the kink
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i]) < 1e-3) a[i] = 0.1;
    check_gradients({a}, [](const std::vector<Var>& v) {
        return mean_all(add(relu(v[0]), sigmoid(v[0])));
    });
}

TEST_CASE("softmax and cross entropy gradients match finite differences") {
    std::mt19937_64 rng(13);
    Tensor logits = random_tensor(6, 4, rng);
    check_gradients({logits}, [](const std::vector<Var>& v) {
        return mean_all(cross_entropy_rows_target0(v[0]));
    });
    check_gradients({logits}, [](const std::vector<Var>& v) {
        return mean_all(cross_entropy_rows(v[0], {1, 3, 0, 2, 1, 3}));
    });
    check_gradients({logits}, [](const std::vector<Var>& v) {
        return sum_all(mul(softmax_rows(v[0]), v[0]));
    });
}

TEST_CASE("layer norm gradients match finite differences") {
    std::mt19937_64 rng(14);
    Tensor x = random_tensor(3, 6, rng);
    Tensor g = random_tensor(1, 6, rng), b = random_tensor(1, 6, rng);
    check_gradients({x, g, b}, [](const std::vector<Var>& v) {
        return sum_all(mul(layer_norm_rows(v[0], v[1], v[2]), v[0]));
    });
}

TEST_CASE("structural op gradients match finite differences") {
    std::mt19937_64 rng(15);
    Tensor a = random_tensor(4, 3, rng), b = random_tensor(4, 2, rng);
    check_gradients({a, b}, [](const std::vector<Var>& v) {
        Var cat = concat_cols({v[0], v[1]});
        Var sl = slice_cols(cat, 1, 3);
        Var gathered = gather_rows(sl, {2, 0, 0, 3});
        return sum_all(mul(gathered, gathered));
    });
    check_gradients({a}, [](const std::vector<Var>& v) {
        Var t = transpose(v[0]);
        Var r = reshape(t, 4, 3);
        return sum_all(mul(r, r));
    });
    check_gradients({a, b}, [](const std::vector<Var>& v) {
        Var stacked = concat_rows({v[0], gather_rows(v[0], {1, 2})});
        Var wide = concat_rows({tile_rows(v[1], 1), gather_rows(v[1], {0, 1})});
        return sum_all(matmul(transpose(stacked), wide));
    });
}

TEST_CASE("cosine similarity gradients match finite differences") {
    std::mt19937_64 rng(16);
    Tensor a = random_tensor(5, 4, rng), b = random_tensor(5, 4, rng);
    check_gradients({a, b}, [](const std::vector<Var>& v) {
        return sum_all(cosine_rows(v[0], v[1]));
    });
}

TEST_CASE("block attention gradients match finite differences") {
    std::mt19937_64 rng(17);
    Tensor q = random_tensor(6, 3, rng), k = random_tensor(6, 3, rng), v = random_tensor(6, 3, rng);
    check_gradients({q, k, v}, [](const std::vector<Var>& vars) {
        Var out = attention_blocks(vars[0], vars[1], vars[2], 3);
        return sum_all(mul(out, out));
    });
}

TEST_CASE("assemble_rows scatters gradients into parents") {
    std::mt19937_64 rng(18);
    Tensor table = random_tensor(4, 3, rng);
    Tensor base(3, 3);
    base.at(0, 0) = 1.0;
    check_gradients({table}, [&](const std::vector<Var>& v) {
        std::vector<std::vector<RowRef>> refs(3);
        refs[0] = {{0, 1, 0.5}, {0, 2, 0.25}};
        refs[1] = {{0, 0, 1.0}};
        refs[2] = {{0, 3, -2.0}, {0, 0, 1.0}};
        Var out = assemble_rows(base, refs, {v[0]});
        return sum_all(mul(out, out));
    });
}

TEST_CASE("dropout is identity in evaluation mode and scales in training") {
    std::mt19937_64 rng(19);
    Tensor x = random_tensor(20, 10, rng);
    Var v = leaf(x);
    Var eval_out = dropout(v, 0.4, rng, false);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(eval_out->value[i] == x[i]);

    Var train_out = dropout(v, 0.4, rng, true);
    int zeros = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (train_out->value[i] == 0.0) {
            ++zeros;
        } else {
            CHECK(train_out->value[i] == doctest::Approx(x[i] / 0.6));
        }
    }
    CHECK(zeros > 20);
    CHECK(zeros < 180);
}

TEST_CASE("backward rejects non-scalar roots") {
    Var v = leaf(Tensor(2, 2));
    CHECK_THROWS_AS(backward(v), std::invalid_argument);
}

TEST_CASE("learning rate schedule peaks at step 300") {
    // 0.5 * d^-0.5 * min(s^-0.5, 300^-1.5 * s) with d = 64
    CHECK(lr_at_step(300, 64) == doctest::Approx(3.6084391824351615e-3).epsilon(1e-12));
    CHECK(lr_at_step(1, 64) == doctest::Approx(1.2028130608117206e-5).epsilon(1e-12));
    CHECK(lr_at_step(299, 64) < lr_at_step(300, 64));
    CHECK(lr_at_step(301, 64) < lr_at_step(300, 64));
    CHECK_THROWS_AS(lr_at_step(0, 64), std::invalid_argument);
}

TEST_CASE("adam first step matches the closed form") {
    // With bias correction the first update is -lr * sign(g) regardless of
    // the gradient magnitude (up to the epsilon term).
    std::mt19937_64 rng(20);
    ParamStore store;
    Var w = store.create_from("w", Tensor(1, 3));
    Var loss = sum_all(mul(w, constant(random_tensor(1, 3, rng))));
    store.zero_grad();
    backward(loss);
    Tensor grads = w->grad;
    store.adam_step(0.01);
    for (std::size_t i = 0; i < 3; ++i) {
        double expected = -0.01 * grads[i] / (std::abs(grads[i]) + 1e-9);
        CHECK(w->value[i] == doctest::Approx(expected).epsilon(1e-9));
    }
    CHECK(store.step() == 1);
}

TEST_CASE("adam rejects non-finite gradients with the parameter name") {
    ParamStore store;
    Var w = store.create_from("bad/param", Tensor(1, 1));
    w->ensure_grad();
    w->grad[0] = std::nan("");
    CHECK_THROWS_WITH_AS(store.adam_step(0.01),
                         doctest::Contains("bad/param"), std::runtime_error);
}

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "era/policy.hpp"
#include "era/response.hpp"

using namespace era;

namespace {

ModelConfig tiny_cfg(int vocab = 24, int hidden = 6) {
    ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.hidden = hidden;
    cfg.emb = hidden;
    cfg.init_scale = 0.3;  // keep gradients well away from zero
    return cfg;
}

TokenSeq random_seq(std::mt19937_64& rng, int vocab, int lo, int hi) {
    std::uniform_int_distribution<int> len(lo, hi);
    std::uniform_int_distribution<TokenId> tok(0, vocab - 1);
    TokenSeq s;
    int n = len(rng);
    for (int i = 0; i < n; ++i) s.push_back(tok(rng));
    return s;
}

// Central finite differences on a sample of coordinates.
double max_rel_err(const std::function<double(const Params&)>& f, const Params& at,
                   const Params& grad, std::mt19937_64& rng, int n_coords) {
    std::uniform_int_distribution<size_t> pick(0, at.size() - 1);
    const double h = 1e-5;
    double worst = 0.0;
    for (int c = 0; c < n_coords; ++c) {
        size_t j = pick(rng);
        Params p = at;
        p[j] += h;
        double up = f(p);
        p[j] -= 2 * h;
        double dn = f(p);
        double fd = (up - dn) / (2 * h);
        double rel = std::abs(fd - grad[j]) / std::max({std::abs(fd), std::abs(grad[j]), 1e-6});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace

TEST_CASE("parameter counts are pure functions of the config") {
    auto cfg = tiny_cfg();
    std::mt19937_64 rng(1);
    CHECK(static_cast<int>(init_policy_params(cfg, rng).size()) == policy_param_count(cfg));
    CHECK(static_cast<int>(init_value_params(cfg, rng).size()) == value_param_count(cfg));
    CHECK(static_cast<int>(init_token_value_params(cfg, rng).size()) ==
          token_value_param_count(cfg));
}

TEST_CASE("log-prob gradients match central finite differences") {
    auto cfg = tiny_cfg();
    std::mt19937_64 rng(7);
    for (int inst = 0; inst < 100; ++inst) {
        auto params = init_policy_params(cfg, rng);
        auto x = random_seq(rng, cfg.vocab_size, 2, 8);
        auto y = random_seq(rng, cfg.vocab_size, 1, 6);
        Params grad(params.size(), 0.0);
        log_prob_and_grad(cfg, params, x, y, grad);
        auto f = [&](const Params& p) { return log_prob(cfg, p, x, y).total; };
        CHECK(max_rel_err(f, params, grad, rng, 12) < 1e-3);
    }
}

TEST_CASE("probabilities normalize at every step") {
    auto cfg = tiny_cfg();
    std::mt19937_64 rng(13);
    auto params = init_policy_params(cfg, rng);
    auto x = random_seq(rng, cfg.vocab_size, 3, 6);
    // Sum exp(logp) over all possible next tokens at each prefix position.
    TokenSeq y = random_seq(rng, cfg.vocab_size, 3, 3);
    for (size_t pos = 0; pos < y.size(); ++pos) {
        double total = 0.0;
        for (TokenId t = 0; t < cfg.vocab_size; ++t) {
            TokenSeq probe(y.begin(), y.begin() + static_cast<long>(pos));
            probe.push_back(t);
            total += std::exp(log_prob(cfg, params, x, probe).logps.back());
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("adding a constant to output logits leaves log-probs unchanged") {
    auto cfg = tiny_cfg();
    std::mt19937_64 rng(17);
    auto params = init_policy_params(cfg, rng);
    auto x = random_seq(rng, cfg.vocab_size, 2, 5);
    auto y = random_seq(rng, cfg.vocab_size, 2, 5);
    auto base = log_prob(cfg, params, x, y);
    auto off = policy_offsets(cfg);
    Params shifted = params;
    for (int k = 0; k < cfg.vocab_size; ++k) shifted[static_cast<size_t>(off.b_o + k)] += 3.7;
    auto moved = log_prob(cfg, shifted, x, y);
    for (size_t i = 0; i < base.logps.size(); ++i)
        CHECK(base.logps[i] == doctest::Approx(moved.logps[i]).epsilon(1e-12));
}

TEST_CASE("turn value gradients match finite differences and ignore the response") {
    auto cfg = tiny_cfg();
    std::mt19937_64 rng(19);
    for (int inst = 0; inst < 100; ++inst) {
        auto vp = init_value_params(cfg, rng);
        auto x = random_seq(rng, cfg.vocab_size, 2, 8);
        Params grad(vp.size(), 0.0);
        double val = value_turn_grad(cfg, vp, x, 1.0, grad);
        CHECK(val == doctest::Approx(value_turn(cfg, vp, x)));
        auto f = [&](const Params& p) { return value_turn(cfg, p, x); };
        CHECK(max_rel_err(f, vp, grad, rng, 10) < 1e-3);
    }
    // Zero-weight head gives zero value.
    Params zeros(static_cast<size_t>(value_param_count(cfg)), 0.0);
    CHECK(value_turn(cfg, zeros, random_seq(rng, cfg.vocab_size, 3, 3)) == 0.0);
}

TEST_CASE("token value head emits one value per position with FD-exact gradients") {
    auto cfg = tiny_cfg();
    std::mt19937_64 rng(23);
    for (int inst = 0; inst < 100; ++inst) {
        auto tp = init_token_value_params(cfg, rng);
        auto x = random_seq(rng, cfg.vocab_size, 2, 6);
        auto y = random_seq(rng, cfg.vocab_size, 1, 6);
        auto vals = token_values(cfg, tp, x, y);
        REQUIRE(vals.size() == y.size());

        std::vector<double> coeff(y.size());
        std::uniform_real_distribution<double> cd(-1.0, 1.0);
        for (auto& c : coeff) c = cd(rng);
        Params grad(tp.size(), 0.0);
        token_values_backward(cfg, tp, x, y, coeff, grad);
        auto f = [&](const Params& p) {
            auto vv = token_values(cfg, p, x, y);
            double s = 0.0;
            for (size_t i = 0; i < vv.size(); ++i) s += coeff[i] * vv[i];
            return s;
        };
        CHECK(max_rel_err(f, tp, grad, rng, 10) < 1e-3);
    }
    Params zeros(static_cast<size_t>(token_value_param_count(cfg)), 0.0);
    auto vals = token_values(cfg, zeros, {1, 2}, {3, 4, 5});
    for (double v : vals) CHECK(v == 0.0);
}

TEST_CASE("entropy-weighted backward matches finite differences") {
    auto cfg = tiny_cfg();
    std::mt19937_64 rng(29);
    for (int inst = 0; inst < 30; ++inst) {
        auto params = init_policy_params(cfg, rng);
        auto x = random_seq(rng, cfg.vocab_size, 2, 5);
        auto y = random_seq(rng, cfg.vocab_size, 1, 5);
        std::uniform_real_distribution<double> cd(-1.0, 1.0);
        std::vector<double> cl(y.size()), ce(y.size());
        for (auto& c : cl) c = cd(rng);
        for (auto& c : ce) c = cd(rng);
        Params grad(params.size(), 0.0);
        policy_backward(cfg, params, x, y, cl, ce, grad);
        auto f = [&](const Params& p) {
            Params dummy(p.size(), 0.0);
            auto res = policy_backward(cfg, p, x, y, std::vector<double>(y.size(), 0.0),
                                       std::vector<double>(y.size(), 0.0), dummy);
            double s = 0.0;
            for (size_t i = 0; i < y.size(); ++i)
                s += cl[i] * res.logps[i] + ce[i] * res.entropies[i];
            return s;
        };
        CHECK(max_rel_err(f, params, grad, rng, 10) < 1e-3);
    }
}

TEST_CASE("sampling is deterministic per seed and stops at the action-end tag") {
    const auto& v = Vocabulary::standard();
    ModelConfig cfg;
    cfg.vocab_size = v.size();
    cfg.hidden = 16;
    cfg.emb = 16;
    std::mt19937_64 init_rng(3);
    auto params = init_policy_params(cfg, init_rng);
    TokenSeq x = {v.require("instruction:"), v.require("task:pick_place")};

    std::mt19937_64 r1(42), r2(42);
    auto [y1, t1] = sample_response(cfg, v, params, x, r1, 1.0);
    auto [y2, t2] = sample_response(cfg, v, params, x, r2, 1.0);
    CHECK(y1 == y2);
    REQUIRE(t1.logps.size() == y1.size());
    for (double lp : t1.logps) CHECK(lp <= 0.0);
    CHECK(static_cast<int>(y1.size()) <= cfg.max_response_tokens);
    if (static_cast<int>(y1.size()) < cfg.max_response_tokens)
        CHECK(y1.back() == v.action_end());

    // Greedy decoding equals the zero-temperature limit.
    std::mt19937_64 r3(1);
    auto [yg, tg] = sample_response(cfg, v, params, x, r3, 0.0);
    std::mt19937_64 r4(2);
    auto [yg2, tg2] = sample_response(cfg, v, params, x, r4, 0.0);
    CHECK(yg == yg2);

    // Recomputing the trace from the stored pair reproduces it bit-for-bit.
    auto again = log_prob(cfg, params, x, y1);
    REQUIRE(again.logps.size() == t1.logps.size());
    for (size_t i = 0; i < again.logps.size(); ++i) CHECK(again.logps[i] == t1.logps[i]);
}

TEST_CASE("sampled sequences always decode or fail as values") {
    const auto& v = Vocabulary::standard();
    ModelConfig cfg;
    cfg.vocab_size = v.size();
    cfg.hidden = 8;
    cfg.emb = 8;
    std::mt19937_64 rng(5);
    auto params = init_policy_params(cfg, rng);
    TokenSeq x = {v.require("instruction:")};
    for (int i = 0; i < 10000; ++i) {
        auto [y, tr] = sample_response(cfg, v, params, x, rng, 1.0);
        auto r = decode_response(v, y, i % 2 == 0 ? ActionMode::HighLevel : ActionMode::LowLevel);
        (void)r;  // must simply not abort
    }
}

TEST_CASE("cloning a single repeated sample drives its loss toward zero") {
    auto cfg = tiny_cfg(24, 12);
    cfg.init_scale = 0.02;
    std::mt19937_64 rng(11);
    auto params = init_policy_params(cfg, rng);
    PriorTokenSample s;
    s.prompt = {1, 2, 3};
    s.target = {4, 5, 6, 7};
    std::vector<PriorTokenSample> data(16, s);
    auto curve = clone_train(cfg, params, data, 300, 5e-2, 9);
    CHECK(curve.front() > curve.back());
    CHECK(curve.back() < 0.05);
}

TEST_CASE("near-uniform params give per-token loss near log vocab size") {
    auto cfg = tiny_cfg(32, 8);
    cfg.init_scale = 1e-4;
    std::mt19937_64 rng(31);
    auto params = init_policy_params(cfg, rng);
    std::vector<PriorTokenSample> data;
    for (int i = 0; i < 50; ++i)
        data.push_back({random_seq(rng, cfg.vocab_size, 2, 5),
                        random_seq(rng, cfg.vocab_size, 2, 6)});
    double total = 0.0;
    int64_t count = 0;
    for (const auto& d : data) {
        auto tr = log_prob(cfg, params, d.prompt, d.target);
        for (double lp : tr.logps) total -= lp;
        count += static_cast<int64_t>(tr.logps.size());
    }
    const double per_token = total / static_cast<double>(count);
    CHECK(per_token == doctest::Approx(std::log(32.0)).epsilon(0.01));
}

TEST_CASE("held-out loss decreases after an epoch on expert-like data") {
    auto cfg = tiny_cfg(40, 16);
    cfg.init_scale = 0.02;
    std::mt19937_64 rng(101);
    // Structured mapping: target is a function of the prompt's first token.
    auto make = [&](int key) {
        PriorTokenSample s;
        s.prompt = {static_cast<TokenId>(key), 7, 9};
        s.target = {static_cast<TokenId>((key * 3) % 40), static_cast<TokenId>((key + 5) % 40)};
        return s;
    };
    std::vector<PriorTokenSample> train, held;
    for (int i = 0; i < 30; ++i) train.push_back(make(i % 10));
    for (int i = 0; i < 10; ++i) held.push_back(make(i % 10));
    auto eval = [&](const Params& p) {
        double total = 0.0;
        int64_t n = 0;
        for (const auto& d : held) {
            auto tr = log_prob(cfg, p, d.prompt, d.target);
            for (double lp : tr.logps) total -= lp;
            n += static_cast<int64_t>(tr.logps.size());
        }
        return total / static_cast<double>(n);
    };
    auto params = init_policy_params(cfg, rng);
    const double before = eval(params);
    clone_train(cfg, params, train, 1, 1e-2, 77);
    const double after = eval(params);
    CHECK(after < before);
}

TEST_CASE("empty dataset raises") {
    auto cfg = tiny_cfg();
    std::mt19937_64 rng(1);
    auto params = init_policy_params(cfg, rng);
    CHECK_THROWS_AS(clone_train(cfg, params, {}, 1, 1e-3, 0), EmptyDatasetError);
}

TEST_CASE("gradient clipping bounds the global norm") {
    Params g = {3.0, 4.0};  // norm 5
    clip_global_norm(g, 1.0);
    CHECK(global_norm(g) == doctest::Approx(1.0));
    Params small = {0.1, 0.1};
    Params copy = small;
    clip_global_norm(small, 1.0);
    CHECK(small == copy);
}

#include "era/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace era {

namespace {

void matvec(const double* w, const double* x, double* out, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* row = w + static_cast<size_t>(r) * cols;
        double acc = 0.0;
        for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
}

// out[c] += w^T d  (accumulate into x-gradient)
void matvec_t_acc(const double* w, const double* d, double* out, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* row = w + static_cast<size_t>(r) * cols;
        const double dr = d[r];
        if (dr == 0.0) continue;
        for (int c = 0; c < cols; ++c) out[c] += row[c] * dr;
    }
}

// gw[r][c] += d[r] * x[c]
void outer_acc(double* gw, const double* d, const double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* row = gw + static_cast<size_t>(r) * cols;
        const double dr = d[r];
        if (dr == 0.0) continue;
        for (int c = 0; c < cols; ++c) row[c] += dr * x[c];
    }
}

double log_sum_exp(const std::vector<double>& z) {
    double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

struct ForwardTrace {
    std::vector<double> feat;                 // F
    std::vector<double> state;                // H, tanh output
    std::vector<std::vector<double>> hidden;  // h_0..h_n, each H
    std::vector<std::vector<double>> probs;   // per position, V
    std::vector<double> logps;
    std::vector<double> entropies;
};

// Runs the response chain and keeps everything the backward pass needs.
ForwardTrace run_forward(const ModelConfig& cfg, const Params& p, const TokenSeq& x,
                         const TokenSeq& y) {
    const auto off = policy_offsets(cfg);
    const int H = cfg.hidden, V = cfg.vocab_size, E = cfg.emb, F = cfg.feat_dim();
    ForwardTrace tr;
    tr.feat = feature_vector(cfg, x);
    tr.state.resize(static_cast<size_t>(H));
    matvec(&p[static_cast<size_t>(off.w_enc)], tr.feat.data(), tr.state.data(), H, F);
    for (int h = 0; h < H; ++h)
        tr.state[static_cast<size_t>(h)] =
            std::tanh(tr.state[static_cast<size_t>(h)] + p[static_cast<size_t>(off.b_enc + h)]);

    tr.hidden.push_back(tr.state);
    std::vector<double> logits(static_cast<size_t>(V));
    for (size_t i = 0; i < y.size(); ++i) {
        const auto& h_prev = tr.hidden.back();
        matvec(&p[static_cast<size_t>(off.w_o)], h_prev.data(), logits.data(), V, H);
        for (int k = 0; k < V; ++k) logits[static_cast<size_t>(k)] += p[static_cast<size_t>(off.b_o + k)];
        const double lse = log_sum_exp(logits);
        std::vector<double> prob(static_cast<size_t>(V));
        double ent = 0.0;
        for (int k = 0; k < V; ++k) {
            const double lp = logits[static_cast<size_t>(k)] - lse;
            const double pk = std::exp(lp);
            prob[static_cast<size_t>(k)] = pk;
            if (pk > 0.0) ent -= pk * lp;
        }
        tr.logps.push_back(logits[static_cast<size_t>(y[i])] - lse);
        tr.entropies.push_back(ent);
        tr.probs.push_back(std::move(prob));

        // Consume y_i; the state encoding feeds every step so late positions
        // keep sight of the input.
        std::vector<double> h_new(static_cast<size_t>(H));
        const double* e_row = &p[static_cast<size_t>(off.emb) +
                                 static_cast<size_t>(y[i]) * static_cast<size_t>(E)];
        for (int r = 0; r < H; ++r) {
            const double* wh_row = &p[static_cast<size_t>(off.w_h)] + static_cast<size_t>(r) * H;
            const double* wx_row = &p[static_cast<size_t>(off.w_x)] + static_cast<size_t>(r) * E;
            const double* ws_row = &p[static_cast<size_t>(off.w_s)] + static_cast<size_t>(r) * H;
            double acc = p[static_cast<size_t>(off.b_h + r)];
            for (int c = 0; c < H; ++c) acc += wh_row[c] * h_prev[static_cast<size_t>(c)];
            for (int c = 0; c < E; ++c) acc += wx_row[c] * e_row[c];
            for (int c = 0; c < H; ++c) acc += ws_row[c] * tr.state[static_cast<size_t>(c)];
            h_new[static_cast<size_t>(r)] = std::tanh(acc);
        }
        tr.hidden.push_back(std::move(h_new));
    }
    return tr;
}

}  // namespace

PolicyOffsets policy_offsets(const ModelConfig& cfg) {
    const int H = cfg.hidden, V = cfg.vocab_size, E = cfg.emb, F = cfg.feat_dim();
    PolicyOffsets o{};
    o.w_enc = 0;
    o.b_enc = o.w_enc + H * F;
    o.emb = o.b_enc + H;
    o.w_h = o.emb + V * E;
    o.w_x = o.w_h + H * H;
    o.w_s = o.w_x + H * E;
    o.b_h = o.w_s + H * H;
    o.w_o = o.b_h + H;
    o.b_o = o.w_o + V * H;
    o.total = o.b_o + V;
    return o;
}

int policy_param_count(const ModelConfig& cfg) { return policy_offsets(cfg).total; }

ValueOffsets value_offsets(const ModelConfig& cfg) {
    const int H = cfg.hidden, F = cfg.feat_dim();
    ValueOffsets o{};
    o.w1 = 0;
    o.b1 = o.w1 + H * F;
    o.w2 = o.b1 + H;
    o.b2 = o.w2 + H;
    o.total = o.b2 + 1;
    return o;
}

int value_param_count(const ModelConfig& cfg) { return value_offsets(cfg).total; }

TokenValueOffsets token_value_offsets(const ModelConfig& cfg) {
    const int H = cfg.hidden, V = cfg.vocab_size, E = cfg.emb, F = cfg.feat_dim();
    TokenValueOffsets o{};
    o.w1 = 0;
    o.b1 = o.w1 + H * F;
    o.emb = o.b1 + H;
    o.w_h = o.emb + V * E;
    o.w_x = o.w_h + H * H;
    o.w_s = o.w_x + H * E;
    o.b_h = o.w_s + H * H;
    o.w = o.b_h + H;
    o.b = o.w + H;
    o.total = o.b + 1;
    return o;
}

int token_value_param_count(const ModelConfig& cfg) { return token_value_offsets(cfg).total; }

namespace {

Params random_params(int n, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, scale);
    Params p(static_cast<size_t>(n));
    for (auto& v : p) v = d(rng);
    return p;
}

}  // namespace

Params init_policy_params(const ModelConfig& cfg, std::mt19937_64& rng) {
    return random_params(policy_param_count(cfg), cfg.init_scale, rng);
}

Params init_value_params(const ModelConfig& cfg, std::mt19937_64& rng) {
    return random_params(value_param_count(cfg), cfg.init_scale, rng);
}

Params init_token_value_params(const ModelConfig& cfg, std::mt19937_64& rng) {
    return random_params(token_value_param_count(cfg), cfg.init_scale, rng);
}

ModelConfig ModelConfig::for_vocabulary(const Vocabulary& v) {
    ModelConfig cfg;
    cfg.vocab_size = v.size();
    cfg.history_marker = v.require("history:");
    cfg.observation_marker = v.require("observation:");
    return cfg;
}

std::vector<double> feature_vector(const ModelConfig& cfg, const TokenSeq& x) {
    std::vector<double> f(static_cast<size_t>(cfg.feat_dim()), 0.0);
    int section = 0;
    for (TokenId t : x) {
        if (t == cfg.history_marker && cfg.history_marker >= 0) section = 1;
        else if (t == cfg.observation_marker && cfg.observation_marker >= 0) section = 2;
        if (t >= 0 && t < cfg.vocab_size)
            f[static_cast<size_t>(section * cfg.vocab_size + t)] += 1.0;
    }
    return f;
}

std::pair<TokenSeq, LogProbTrace> sample_response(const ModelConfig& cfg, const Vocabulary& v,
                                                  const Params& p, const TokenSeq& x,
                                                  std::mt19937_64& rng, double temperature) {
    const auto off = policy_offsets(cfg);
    const int H = cfg.hidden, V = cfg.vocab_size, E = cfg.emb, F = cfg.feat_dim();
    auto feat = feature_vector(cfg, x);
    std::vector<double> h(static_cast<size_t>(H));
    matvec(&p[static_cast<size_t>(off.w_enc)], feat.data(), h.data(), H, F);
    for (int i = 0; i < H; ++i)
        h[static_cast<size_t>(i)] =
            std::tanh(h[static_cast<size_t>(i)] + p[static_cast<size_t>(off.b_enc + i)]);
    const std::vector<double> state = h;

    TokenSeq out;
    LogProbTrace trace;
    std::vector<double> logits(static_cast<size_t>(V));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const bool greedy = temperature <= 1e-9;

    while (static_cast<int>(out.size()) < cfg.max_response_tokens) {
        matvec(&p[static_cast<size_t>(off.w_o)], h.data(), logits.data(), V, H);
        for (int k = 0; k < V; ++k)
            logits[static_cast<size_t>(k)] += p[static_cast<size_t>(off.b_o + k)];
        TokenId chosen = 0;
        if (greedy) {
            chosen = static_cast<TokenId>(
                std::max_element(logits.begin(), logits.end()) - logits.begin());
            const double lse = log_sum_exp(logits);
            trace.logps.push_back(logits[static_cast<size_t>(chosen)] - lse);
        } else {
            std::vector<double> scaled(logits);
            for (auto& z : scaled) z /= temperature;
            const double lse = log_sum_exp(scaled);
            const double u = unif(rng);
            double acc = 0.0;
            chosen = static_cast<TokenId>(V - 1);
            for (int k = 0; k < V; ++k) {
                acc += std::exp(scaled[static_cast<size_t>(k)] - lse);
                if (u <= acc) {
                    chosen = static_cast<TokenId>(k);
                    break;
                }
            }
            trace.logps.push_back(scaled[static_cast<size_t>(chosen)] - lse);
        }
        out.push_back(chosen);

        if (chosen == v.action_end()) break;
        // Consume the chosen token.
        std::vector<double> h_new(static_cast<size_t>(H));
        const double* e_row = &p[static_cast<size_t>(off.emb) +
                                 static_cast<size_t>(chosen) * static_cast<size_t>(E)];
        for (int r = 0; r < H; ++r) {
            const double* wh_row = &p[static_cast<size_t>(off.w_h)] + static_cast<size_t>(r) * H;
            const double* wx_row = &p[static_cast<size_t>(off.w_x)] + static_cast<size_t>(r) * E;
            const double* ws_row = &p[static_cast<size_t>(off.w_s)] + static_cast<size_t>(r) * H;
            double acc = p[static_cast<size_t>(off.b_h + r)];
            for (int c = 0; c < H; ++c) acc += wh_row[c] * h[static_cast<size_t>(c)];
            for (int c = 0; c < E; ++c) acc += wx_row[c] * e_row[c];
            for (int c = 0; c < H; ++c) acc += ws_row[c] * state[static_cast<size_t>(c)];
            h_new[static_cast<size_t>(r)] = std::tanh(acc);
        }
        h = std::move(h_new);
    }
    trace.total = std::accumulate(trace.logps.begin(), trace.logps.end(), 0.0);
    return {out, trace};
}

LogProbTrace log_prob(const ModelConfig& cfg, const Params& p, const TokenSeq& x,
                      const TokenSeq& y) {
    auto tr = run_forward(cfg, p, x, y);
    LogProbTrace trace;
    trace.logps = tr.logps;
    trace.total = std::accumulate(tr.logps.begin(), tr.logps.end(), 0.0);
    return trace;
}

PolicyBackwardResult policy_backward(const ModelConfig& cfg, const Params& p, const TokenSeq& x,
                                     const TokenSeq& y, const std::vector<double>& coeff_logp,
                                     const std::vector<double>& coeff_ent, Params& grad) {
    const auto off = policy_offsets(cfg);
    const int H = cfg.hidden, V = cfg.vocab_size, E = cfg.emb, F = cfg.feat_dim();
    const int n = static_cast<int>(y.size());
    auto tr = run_forward(cfg, p, x, y);

    // Reverse sweep. dh carries dL/dh_{i+1} on entry to iteration i; the
    // last hidden state has no downstream gradient. d_state collects the
    // per-step contributions through the state input of the cell.
    std::vector<double> dh(static_cast<size_t>(H), 0.0);
    std::vector<double> d_state(static_cast<size_t>(H), 0.0);
    std::vector<double> dlogits(static_cast<size_t>(V));

    for (int i = n - 1; i >= 0; --i) {
        // First: gradient arriving at h_{i+1} (stored in dh) flows through
        // the recurrence into h_i, the embedding of y_i, and the cell params.
        const auto& h_i1 = tr.hidden[static_cast<size_t>(i + 1)];
        const auto& h_i = tr.hidden[static_cast<size_t>(i)];
        std::vector<double> dh_i(static_cast<size_t>(H), 0.0);
        bool any = false;
        for (double d : dh) any = any || d != 0.0;
        if (any) {
            std::vector<double> da(static_cast<size_t>(H));
            for (int r = 0; r < H; ++r)
                da[static_cast<size_t>(r)] =
                    dh[static_cast<size_t>(r)] *
                    (1.0 - h_i1[static_cast<size_t>(r)] * h_i1[static_cast<size_t>(r)]);
            const double* e_row = &p[static_cast<size_t>(off.emb) +
                                     static_cast<size_t>(y[static_cast<size_t>(i)]) *
                                         static_cast<size_t>(E)];
            outer_acc(&grad[static_cast<size_t>(off.w_h)], da.data(), h_i.data(), H, H);
            outer_acc(&grad[static_cast<size_t>(off.w_x)], da.data(), e_row, H, E);
            outer_acc(&grad[static_cast<size_t>(off.w_s)], da.data(), tr.state.data(), H, H);
            for (int r = 0; r < H; ++r) grad[static_cast<size_t>(off.b_h + r)] += da[static_cast<size_t>(r)];
            // into embedding row of y_i
            double* ge_row = &grad[static_cast<size_t>(off.emb) +
                                   static_cast<size_t>(y[static_cast<size_t>(i)]) *
                                       static_cast<size_t>(E)];
            matvec_t_acc(&p[static_cast<size_t>(off.w_x)], da.data(), ge_row, H, E);
            // into h_i and the shared state input
            matvec_t_acc(&p[static_cast<size_t>(off.w_h)], da.data(), dh_i.data(), H, H);
            matvec_t_acc(&p[static_cast<size_t>(off.w_s)], da.data(), d_state.data(), H, H);
        }

        // Second: position i's logits read h_i.
        const double cl = coeff_logp[static_cast<size_t>(i)];
        const double ce = coeff_ent.empty() ? 0.0 : coeff_ent[static_cast<size_t>(i)];
        if (cl != 0.0 || ce != 0.0) {
            const auto& prob = tr.probs[static_cast<size_t>(i)];
            const double ent = tr.entropies[static_cast<size_t>(i)];
            for (int k = 0; k < V; ++k) {
                const double pk = prob[static_cast<size_t>(k)];
                double d = -cl * pk;
                if (ce != 0.0 && pk > 0.0) d += ce * (-pk * (std::log(pk) + ent));
                dlogits[static_cast<size_t>(k)] = d;
            }
            dlogits[static_cast<size_t>(y[static_cast<size_t>(i)])] += cl;
            outer_acc(&grad[static_cast<size_t>(off.w_o)], dlogits.data(), h_i.data(), V, H);
            for (int k = 0; k < V; ++k) grad[static_cast<size_t>(off.b_o + k)] += dlogits[static_cast<size_t>(k)];
            matvec_t_acc(&p[static_cast<size_t>(off.w_o)], dlogits.data(), dh_i.data(), V, H);
        }
        dh = std::move(dh_i);
    }

    // dh holds dL/dh_0; d_state holds the summed cell-input path. Both meet
    // at the post-tanh encoder output.
    for (int r = 0; r < H; ++r) dh[static_cast<size_t>(r)] += d_state[static_cast<size_t>(r)];
    bool any = false;
    for (double d : dh) any = any || d != 0.0;
    if (any) {
        std::vector<double> ds(static_cast<size_t>(H));
        for (int r = 0; r < H; ++r)
            ds[static_cast<size_t>(r)] =
                dh[static_cast<size_t>(r)] *
                (1.0 - tr.state[static_cast<size_t>(r)] * tr.state[static_cast<size_t>(r)]);
        outer_acc(&grad[static_cast<size_t>(off.w_enc)], ds.data(), tr.feat.data(), H, F);
        for (int r = 0; r < H; ++r) grad[static_cast<size_t>(off.b_enc + r)] += ds[static_cast<size_t>(r)];
    }

    PolicyBackwardResult res;
    res.logps = tr.logps;
    res.entropies = tr.entropies;
    return res;
}

LogProbTrace log_prob_and_grad(const ModelConfig& cfg, const Params& p, const TokenSeq& x,
                               const TokenSeq& y, Params& grad) {
    std::vector<double> ones(y.size(), 1.0);
    std::vector<double> zeros(y.size(), 0.0);
    auto res = policy_backward(cfg, p, x, y, ones, zeros, grad);
    LogProbTrace trace;
    trace.logps = res.logps;
    trace.total = std::accumulate(res.logps.begin(), res.logps.end(), 0.0);
    return trace;
}

void zero_encoder_grad(const ModelConfig& cfg, Params& grad) {
    const auto off = policy_offsets(cfg);
    std::fill(grad.begin() + off.w_enc, grad.begin() + off.emb, 0.0);
}

double value_turn(const ModelConfig& cfg, const Params& vp, const TokenSeq& x) {
    const auto off = value_offsets(cfg);
    const int H = cfg.hidden, F = cfg.feat_dim();
    auto feat = feature_vector(cfg, x);
    double out = vp[static_cast<size_t>(off.b2)];
    for (int r = 0; r < H; ++r) {
        const double* row = &vp[static_cast<size_t>(off.w1)] + static_cast<size_t>(r) * F;
        double acc = vp[static_cast<size_t>(off.b1 + r)];
        for (int c = 0; c < F; ++c) acc += row[c] * feat[static_cast<size_t>(c)];
        out += vp[static_cast<size_t>(off.w2 + r)] * std::tanh(acc);
    }
    return out;
}

double value_turn_grad(const ModelConfig& cfg, const Params& vp, const TokenSeq& x, double coeff,
                       Params& grad) {
    const auto off = value_offsets(cfg);
    const int H = cfg.hidden, F = cfg.feat_dim();
    auto feat = feature_vector(cfg, x);
    double out = vp[static_cast<size_t>(off.b2)];
    for (int r = 0; r < H; ++r) {
        const double* row = &vp[static_cast<size_t>(off.w1)] + static_cast<size_t>(r) * F;
        double acc = vp[static_cast<size_t>(off.b1 + r)];
        for (int c = 0; c < F; ++c) acc += row[c] * feat[static_cast<size_t>(c)];
        const double t = std::tanh(acc);
        out += vp[static_cast<size_t>(off.w2 + r)] * t;
        if (coeff != 0.0) {
            grad[static_cast<size_t>(off.w2 + r)] += coeff * t;
            const double da = coeff * vp[static_cast<size_t>(off.w2 + r)] * (1.0 - t * t);
            grad[static_cast<size_t>(off.b1 + r)] += da;
            double* grow = &grad[static_cast<size_t>(off.w1)] + static_cast<size_t>(r) * F;
            for (int c = 0; c < F; ++c) grow[c] += da * feat[static_cast<size_t>(c)];
        }
    }
    if (coeff != 0.0) grad[static_cast<size_t>(off.b2)] += coeff;
    return out;
}

namespace {

struct TokenValueTrace {
    std::vector<double> feat;
    std::vector<double> state;                // post-tanh encoder output
    std::vector<std::vector<double>> hidden;  // h_0..h_{n-1} used for values
    std::vector<double> values;
};

TokenValueTrace token_value_forward(const ModelConfig& cfg, const Params& tp, const TokenSeq& x,
                                    const TokenSeq& y) {
    const auto off = token_value_offsets(cfg);
    const int H = cfg.hidden, E = cfg.emb, F = cfg.feat_dim();
    TokenValueTrace tr;
    tr.feat = feature_vector(cfg, x);
    std::vector<double> h(static_cast<size_t>(H));
    matvec(&tp[static_cast<size_t>(off.w1)], tr.feat.data(), h.data(), H, F);
    for (int r = 0; r < H; ++r)
        h[static_cast<size_t>(r)] =
            std::tanh(h[static_cast<size_t>(r)] + tp[static_cast<size_t>(off.b1 + r)]);
    tr.state = h;
    for (size_t i = 0; i < y.size(); ++i) {
        tr.hidden.push_back(h);
        double val = tp[static_cast<size_t>(off.b)];
        for (int r = 0; r < H; ++r) val += tp[static_cast<size_t>(off.w + r)] * h[static_cast<size_t>(r)];
        tr.values.push_back(val);
        if (i + 1 == y.size()) break;
        std::vector<double> h_new(static_cast<size_t>(H));
        const double* e_row = &tp[static_cast<size_t>(off.emb) +
                                  static_cast<size_t>(y[i]) * static_cast<size_t>(E)];
        for (int r = 0; r < H; ++r) {
            const double* wh_row = &tp[static_cast<size_t>(off.w_h)] + static_cast<size_t>(r) * H;
            const double* wx_row = &tp[static_cast<size_t>(off.w_x)] + static_cast<size_t>(r) * E;
            const double* ws_row = &tp[static_cast<size_t>(off.w_s)] + static_cast<size_t>(r) * H;
            double acc = tp[static_cast<size_t>(off.b_h + r)];
            for (int c = 0; c < H; ++c) acc += wh_row[c] * h[static_cast<size_t>(c)];
            for (int c = 0; c < E; ++c) acc += wx_row[c] * e_row[c];
            for (int c = 0; c < H; ++c) acc += ws_row[c] * tr.state[static_cast<size_t>(c)];
            h_new[static_cast<size_t>(r)] = std::tanh(acc);
        }
        h = std::move(h_new);
    }
    return tr;
}

}  // namespace

std::vector<double> token_values(const ModelConfig& cfg, const Params& tp, const TokenSeq& x,
                                 const TokenSeq& y) {
    return token_value_forward(cfg, tp, x, y).values;
}

std::vector<double> token_values_backward(const ModelConfig& cfg, const Params& tp,
                                          const TokenSeq& x, const TokenSeq& y,
                                          const std::vector<double>& coeff, Params& grad) {
    const auto off = token_value_offsets(cfg);
    const int H = cfg.hidden, E = cfg.emb, F = cfg.feat_dim();
    const int n = static_cast<int>(y.size());
    auto tr = token_value_forward(cfg, tp, x, y);

    std::vector<double> dh(static_cast<size_t>(H), 0.0);
    std::vector<double> d_state(static_cast<size_t>(H), 0.0);
    for (int i = n - 1; i >= 0; --i) {
        // Gradient arriving at h_{i+1} flows back through the recurrence.
        bool any = false;
        for (double d : dh) any = any || d != 0.0;
        if (any) {
            const auto& h_next = tr.hidden[static_cast<size_t>(i + 1)];
            const auto& h_cur = tr.hidden[static_cast<size_t>(i)];
            std::vector<double> da(static_cast<size_t>(H));
            for (int r = 0; r < H; ++r)
                da[static_cast<size_t>(r)] =
                    dh[static_cast<size_t>(r)] *
                    (1.0 - h_next[static_cast<size_t>(r)] * h_next[static_cast<size_t>(r)]);
            const double* e_row = &tp[static_cast<size_t>(off.emb) +
                                      static_cast<size_t>(y[static_cast<size_t>(i)]) *
                                          static_cast<size_t>(E)];
            outer_acc(&grad[static_cast<size_t>(off.w_h)], da.data(), h_cur.data(), H, H);
            outer_acc(&grad[static_cast<size_t>(off.w_x)], da.data(), e_row, H, E);
            outer_acc(&grad[static_cast<size_t>(off.w_s)], da.data(), tr.state.data(), H, H);
            for (int r = 0; r < H; ++r) grad[static_cast<size_t>(off.b_h + r)] += da[static_cast<size_t>(r)];
            double* ge_row = &grad[static_cast<size_t>(off.emb) +
                                   static_cast<size_t>(y[static_cast<size_t>(i)]) *
                                       static_cast<size_t>(E)];
            matvec_t_acc(&tp[static_cast<size_t>(off.w_x)], da.data(), ge_row, H, E);
            matvec_t_acc(&tp[static_cast<size_t>(off.w_s)], da.data(), d_state.data(), H, H);
            std::fill(dh.begin(), dh.end(), 0.0);
            matvec_t_acc(&tp[static_cast<size_t>(off.w_h)], da.data(), dh.data(), H, H);
        }
        // Value head at position i.
        const double c = coeff[static_cast<size_t>(i)];
        if (c != 0.0) {
            const auto& h_cur = tr.hidden[static_cast<size_t>(i)];
            grad[static_cast<size_t>(off.b)] += c;
            for (int r = 0; r < H; ++r) {
                grad[static_cast<size_t>(off.w + r)] += c * h_cur[static_cast<size_t>(r)];
                dh[static_cast<size_t>(r)] += c * tp[static_cast<size_t>(off.w + r)];
            }
        }
    }
    // dh holds dL/dh_0; combine with the per-step state-input path and push
    // through the encoder.
    for (int r = 0; r < H; ++r) dh[static_cast<size_t>(r)] += d_state[static_cast<size_t>(r)];
    bool any = false;
    for (double d : dh) any = any || d != 0.0;
    if (any) {
        const auto& h0 = tr.state;
        std::vector<double> ds(static_cast<size_t>(H));
        for (int r = 0; r < H; ++r)
            ds[static_cast<size_t>(r)] =
                dh[static_cast<size_t>(r)] *
                (1.0 - h0[static_cast<size_t>(r)] * h0[static_cast<size_t>(r)]);
        outer_acc(&grad[static_cast<size_t>(off.w1)], ds.data(), tr.feat.data(), H, F);
        for (int r = 0; r < H; ++r) grad[static_cast<size_t>(off.b1 + r)] += ds[static_cast<size_t>(r)];
    }
    return tr.values;
}

void AdamState::step(Params& params, const Params& grad) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

double global_norm(const Params& grad) {
    double s = 0.0;
    for (double g : grad) s += g * g;
    return std::sqrt(s);
}

void clip_global_norm(Params& grad, double max_norm) {
    const double n = global_norm(grad);
    if (n <= max_norm || n == 0.0) return;
    const double scale = max_norm / n;
    for (auto& g : grad) g *= scale;
}

std::vector<double> clone_train(const ModelConfig& cfg, Params& params,
                                const std::vector<PriorTokenSample>& dataset, int epochs,
                                double lr, uint64_t seed, int batch_size) {
    if (dataset.empty()) throw EmptyDatasetError("clone_train: empty dataset");
    std::mt19937_64 rng(seed);
    AdamState adam(params.size(), lr);
    std::vector<double> curve;
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Params grad(params.size());

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int64_t token_count = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(batch_size)) {
            std::fill(grad.begin(), grad.end(), 0.0);
            const size_t e = std::min(order.size(), b + static_cast<size_t>(batch_size));
            for (size_t i = b; i < e; ++i) {
                const auto& s = dataset[order[i]];
                if (s.target.empty()) continue;
                // Maximize sum log pi with weight -1/batch (gradient descent on
                // the negative mean).
                std::vector<double> coeff(s.target.size(),
                                          -1.0 / static_cast<double>(e - b));
                std::vector<double> zeros(s.target.size(), 0.0);
                auto res = policy_backward(cfg, params, s.prompt, s.target, coeff, zeros, grad);
                for (double lp : res.logps) loss_sum -= lp;
                token_count += static_cast<int64_t>(res.logps.size());
            }
            if (cfg.freeze_encoder) zero_encoder_grad(cfg, grad);
            adam.step(params, grad);
        }
        curve.push_back(token_count > 0 ? loss_sum / static_cast<double>(token_count) : 0.0);
    }
    return curve;
}

}  // namespace era

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "era/vocab.hpp"

namespace era {

struct EmptyDatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bag-of-token state encoder feeding a single recurrent tanh cell over the
// response tokens. Parameters live in flat vectors; all gradients are
// hand-derived and checked against finite differences in the test suite.
struct ModelConfig {
    int vocab_size = 0;
    int hidden = 64;
    int emb = 64;
    int max_response_tokens = 32;
    double init_scale = 0.02;
    bool freeze_encoder = false;
    // Section markers; when unset, all tokens land in the first block.
    TokenId history_marker = -1;
    TokenId observation_marker = -1;

    // Token counts kept in separate blocks for the instruction, history, and
    // observation sections of the input.
    int feat_dim() const { return 3 * vocab_size; }

    static ModelConfig for_vocabulary(const Vocabulary& v);
};

struct PolicyOffsets {
    int w_enc, b_enc, emb, w_h, w_x, w_s, b_h, w_o, b_o, total;
};
PolicyOffsets policy_offsets(const ModelConfig& cfg);
int policy_param_count(const ModelConfig& cfg);

struct ValueOffsets {
    int w1, b1, w2, b2, total;
};
ValueOffsets value_offsets(const ModelConfig& cfg);
int value_param_count(const ModelConfig& cfg);

struct TokenValueOffsets {
    int w1, b1, emb, w_h, w_x, w_s, b_h, w, b, total;
};
TokenValueOffsets token_value_offsets(const ModelConfig& cfg);
int token_value_param_count(const ModelConfig& cfg);

using Params = std::vector<double>;

Params init_policy_params(const ModelConfig& cfg, std::mt19937_64& rng);
Params init_value_params(const ModelConfig& cfg, std::mt19937_64& rng);
Params init_token_value_params(const ModelConfig& cfg, std::mt19937_64& rng);

// Token counts over the vocabulary.
std::vector<double> feature_vector(const ModelConfig& cfg, const TokenSeq& x);

struct LogProbTrace {
    std::vector<double> logps;  // one per response token, each <= 0
    double total = 0.0;
};

// Autoregressive sampling until the action-end tag or the response cap.
// temperature <= 1e-9 decodes greedily.
std::pair<TokenSeq, LogProbTrace> sample_response(const ModelConfig& cfg, const Vocabulary& v,
                                                  const Params& params, const TokenSeq& x,
                                                  std::mt19937_64& rng, double temperature);

LogProbTrace log_prob(const ModelConfig& cfg, const Params& params, const TokenSeq& x,
                      const TokenSeq& y);

// General weighted backward pass: accumulates
//   sum_i coeff_logp[i] * d(log pi(y_i))/dtheta + coeff_ent[i] * dH_i/dtheta
// into grad. Returns per-position log-probs and entropies.
struct PolicyBackwardResult {
    std::vector<double> logps;
    std::vector<double> entropies;
};
PolicyBackwardResult policy_backward(const ModelConfig& cfg, const Params& params,
                                     const TokenSeq& x, const TokenSeq& y,
                                     const std::vector<double>& coeff_logp,
                                     const std::vector<double>& coeff_ent, Params& grad);

LogProbTrace log_prob_and_grad(const ModelConfig& cfg, const Params& params, const TokenSeq& x,
                               const TokenSeq& y, Params& grad);

void zero_encoder_grad(const ModelConfig& cfg, Params& grad);

// Turn-level value head: scalar from the state features only.
double value_turn(const ModelConfig& cfg, const Params& vparams, const TokenSeq& x);
double value_turn_grad(const ModelConfig& cfg, const Params& vparams, const TokenSeq& x,
                       double coeff, Params& grad);

// Token-level value head: one value per generated token position.
std::vector<double> token_values(const ModelConfig& cfg, const Params& tvparams,
                                 const TokenSeq& x, const TokenSeq& y);
std::vector<double> token_values_backward(const ModelConfig& cfg, const Params& tvparams,
                                          const TokenSeq& x, const TokenSeq& y,
                                          const std::vector<double>& coeff, Params& grad);

struct PriorTokenSample {
    TokenSeq prompt;
    TokenSeq target;
};

struct AdamState {
    Params m, v;
    int64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(size_t n, double lr_ = 1e-3) : m(n, 0.0), v(n, 0.0), lr(lr_) {}
    void step(Params& params, const Params& grad);
};

double global_norm(const Params& grad);
void clip_global_norm(Params& grad, double max_norm);

// Supervised cross-entropy training over token samples. Returns the mean
// per-token loss per epoch.
std::vector<double> clone_train(const ModelConfig& cfg, Params& params,
                                const std::vector<PriorTokenSample>& dataset, int epochs,
                                double lr, uint64_t seed, int batch_size = 16);

}  // namespace era

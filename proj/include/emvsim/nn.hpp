#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "emvsim/rng.hpp"

namespace emv::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct NnError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Named tensors; vectors are stored as n x 1 matrices. Shapes are fixed at
// construction of the owning network.
struct ParamSet {
    std::map<std::string, Mat> tensors;

    Mat& at(const std::string& name);
    const Mat& at(const std::string& name) const;
    bool finite() const;
    void scale_add(const ParamSet& other, double c); // this += c * other
    void zero_like(const ParamSet& shapes);
};

struct RecurrentState {
    Vec h; // hidden, width 64
    Vec c; // cell
};

// Adam with bias correction; the linear learning-rate decay is applied by the
// caller through the lr argument.
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamSet& params, const ParamSet& grads, double lr);
    int t() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, Mat> m_, v_;
};

Vec softmax(const Vec& logits);

// Actor-critic network:
//   obs(110) -> FC 128 ReLU ;  fingerprint(32) -> FC 64 ReLU
//   concat(192) -> LSTM 64 (or FC 64 ReLU in dense mode) -> FC 8 softmax
//                                                        -> FC 1 linear
class ActorCritic {
public:
    struct Dims {
        int obs = 110;
        int fingerprint = 32;
        int obs_hidden = 128;
        int fp_hidden = 64;
        int core = 64;
        int actions = 8;
    };

    ActorCritic(const Dims& dims, bool use_lstm, std::uint64_t seed, double init_std = 0.1);

    const Dims& dims() const { return dims_; }
    bool use_lstm() const { return use_lstm_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    RecurrentState initial_state() const;

    // Per-step cache of every intermediate needed by the backward pass.
    struct StepCache {
        Vec obs, fp;
        Vec a1, a2;     // branch activations (post-ReLU)
        Vec x;          // concatenated core input
        Vec gi, gf, gg, go; // LSTM gates (post-nonlinearity)
        Vec c_prev, h_prev, c, h;
        Vec logits, probs;
        double value = 0.0;
    };

    StepCache forward(const Vec& obs, const Vec& fingerprint, RecurrentState& state) const;

    Vec forward_policy(const Vec& obs, const Vec& fingerprint, RecurrentState& state) const;
    double forward_value(const Vec& obs, const Vec& fingerprint, RecurrentState& state) const;

    // Reverse-mode over a batch window (BPTT within the window, recurrent
    // state treated as constant at the window start). d_logits[t] is dL/d
    // pre-softmax logits, d_value[t] is dL/dV at step t.
    ParamSet backward(const std::vector<StepCache>& steps, const std::vector<Vec>& d_logits,
                      const std::vector<double>& d_value) const;

    ParamSet zero_grads() const;

    std::string serialize() const;                 // versioned JSON tensor dump
    static ActorCritic deserialize(const std::string& text);
    void save(const std::string& path) const;
    static ActorCritic load(const std::string& path);

private:
    Dims dims_;
    bool use_lstm_;
    ParamSet params_;
};

// Seeded categorical draw from a probability simplex.
int sample_categorical(const Vec& probs, Rng& rng);

double entropy(const Vec& probs);

// Gradient w.r.t. pre-softmax logits of
//   -log probs[action] * advantage - entropy_weight * H(probs)
Vec policy_logit_grad(const Vec& probs, int action, double advantage, double entropy_weight);

} // namespace emv::nn

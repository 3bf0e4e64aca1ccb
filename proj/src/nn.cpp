#include "emvsim/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace emv::nn {

using json = nlohmann::ordered_json;

Mat& ParamSet::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw NnError("unknown tensor " + name);
    return it->second;
}

const Mat& ParamSet::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw NnError("unknown tensor " + name);
    return it->second;
}

bool ParamSet::finite() const {
    for (const auto& [name, t] : tensors)
        if (!t.allFinite()) return false;
    return true;
}

void ParamSet::scale_add(const ParamSet& other, double c) {
    for (auto& [name, t] : tensors) t += c * other.at(name);
}

void ParamSet::zero_like(const ParamSet& shapes) {
    tensors.clear();
    for (const auto& [name, t] : shapes.tensors) tensors[name] = Mat::Zero(t.rows(), t.cols());
}

void Adam::step(ParamSet& params, const ParamSet& grads, double lr) {
    if (lr <= 0.0) throw NnError("Adam learning rate must be positive");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, p] : params.tensors) {
        const Mat& g = grads.at(name);
        Mat& m = m_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
        Mat& v = v_.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        Mat mhat = m / bc1;
        Mat vhat = v / bc2;
        p -= lr * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                     Mat::Constant(p.rows(), p.cols(), eps_));
    }
}

Vec softmax(const Vec& logits) {
    Vec z = logits.array() - logits.maxCoeff();
    Vec e = z.array().exp();
    return e / e.sum();
}

namespace {

Vec sigmoid(const Vec& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

Mat random_normal(int rows, int cols, double std, Rng& rng) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = std * rng.next_gaussian();
    return m;
}

} // namespace

ActorCritic::ActorCritic(const Dims& dims, bool use_lstm, std::uint64_t seed, double init_std)
    : dims_(dims), use_lstm_(use_lstm) {
    Rng rng(seed);
    auto add = [&](const std::string& name, int r, int c) {
        params_.tensors[name] = random_normal(r, c, init_std, rng);
    };
    add("W_obs", dims.obs_hidden, dims.obs);
    add("b_obs", dims.obs_hidden, 1);
    add("W_fp", dims.fp_hidden, dims.fingerprint);
    add("b_fp", dims.fp_hidden, 1);
    int in = dims.obs_hidden + dims.fp_hidden;
    if (use_lstm_) {
        add("Wx", 4 * dims.core, in);
        add("Wh", 4 * dims.core, dims.core);
        add("b_lstm", 4 * dims.core, 1);
    } else {
        add("W_d", dims.core, in);
        add("b_d", dims.core, 1);
    }
    add("W_pi", dims.actions, dims.core);
    add("b_pi", dims.actions, 1);
    add("W_v", 1, dims.core);
    add("b_v", 1, 1);
}

RecurrentState ActorCritic::initial_state() const {
    return {Vec::Zero(dims_.core), Vec::Zero(dims_.core)};
}

ActorCritic::StepCache ActorCritic::forward(const Vec& obs, const Vec& fingerprint,
                                            RecurrentState& state) const {
    if (obs.size() != dims_.obs || fingerprint.size() != dims_.fingerprint)
        throw NnError("input shape mismatch");
    if (state.h.size() != dims_.core) throw NnError("recurrent state shape mismatch");
    StepCache s;
    s.obs = obs;
    s.fp = fingerprint;
    s.a1 = (params_.at("W_obs") * obs + params_.at("b_obs")).cwiseMax(0.0);
    s.a2 = (params_.at("W_fp") * fingerprint + params_.at("b_fp")).cwiseMax(0.0);
    s.x.resize(s.a1.size() + s.a2.size());
    s.x << s.a1, s.a2;
    s.h_prev = state.h;
    s.c_prev = state.c;
    if (use_lstm_) {
        Vec z = params_.at("Wx") * s.x + params_.at("Wh") * state.h + params_.at("b_lstm");
        int n = dims_.core;
        s.gi = sigmoid(z.segment(0, n));
        s.gf = sigmoid(z.segment(n, n));
        s.gg = z.segment(2 * n, n).array().tanh();
        s.go = sigmoid(z.segment(3 * n, n));
        s.c = s.gf.cwiseProduct(state.c) + s.gi.cwiseProduct(s.gg);
        s.h = s.go.cwiseProduct(s.c.array().tanh().matrix());
        state.c = s.c;
        state.h = s.h;
    } else {
        s.h = (params_.at("W_d") * s.x + params_.at("b_d")).cwiseMax(0.0);
        state.h = s.h;
    }
    s.logits = params_.at("W_pi") * s.h + params_.at("b_pi");
    s.probs = softmax(s.logits);
    s.value = (params_.at("W_v") * s.h + params_.at("b_v"))(0);
    return s;
}

Vec ActorCritic::forward_policy(const Vec& obs, const Vec& fingerprint,
                                RecurrentState& state) const {
    return forward(obs, fingerprint, state).probs;
}

double ActorCritic::forward_value(const Vec& obs, const Vec& fingerprint,
                                  RecurrentState& state) const {
    return forward(obs, fingerprint, state).value;
}

ParamSet ActorCritic::zero_grads() const {
    ParamSet g;
    g.zero_like(params_);
    return g;
}

ParamSet ActorCritic::backward(const std::vector<StepCache>& steps,
                               const std::vector<Vec>& d_logits,
                               const std::vector<double>& d_value) const {
    if (steps.size() != d_logits.size() || steps.size() != d_value.size())
        throw NnError("backward: batch length mismatch");
    ParamSet g = zero_grads();
    int n = dims_.core;
    Vec dh_next = Vec::Zero(n);
    Vec dc_next = Vec::Zero(n);
    for (int t = static_cast<int>(steps.size()) - 1; t >= 0; --t) {
        const StepCache& s = steps[static_cast<size_t>(t)];
        Vec dh = dh_next;
        dh += params_.at("W_pi").transpose() * d_logits[static_cast<size_t>(t)];
        dh += params_.at("W_v").transpose() * Vec::Constant(1, d_value[static_cast<size_t>(t)]);
        g.at("W_pi") += d_logits[static_cast<size_t>(t)] * s.h.transpose();
        g.at("b_pi") += d_logits[static_cast<size_t>(t)];
        g.at("W_v") += d_value[static_cast<size_t>(t)] * s.h.transpose();
        g.at("b_v")(0, 0) += d_value[static_cast<size_t>(t)];

        Vec dx;
        if (use_lstm_) {
            Vec tc = s.c.array().tanh();
            Vec dgo = dh.cwiseProduct(tc);
            Vec dc = dc_next +
                     dh.cwiseProduct(s.go).cwiseProduct((1.0 - tc.array().square()).matrix());
            Vec dgf = dc.cwiseProduct(s.c_prev);
            Vec dgi = dc.cwiseProduct(s.gg);
            Vec dgg = dc.cwiseProduct(s.gi);
            dc_next = dc.cwiseProduct(s.gf);
            Vec dz(4 * n);
            dz.segment(0, n) =
                dgi.cwiseProduct(s.gi).cwiseProduct((1.0 - s.gi.array()).matrix());
            dz.segment(n, n) =
                dgf.cwiseProduct(s.gf).cwiseProduct((1.0 - s.gf.array()).matrix());
            dz.segment(2 * n, n) = dgg.cwiseProduct((1.0 - s.gg.array().square()).matrix());
            dz.segment(3 * n, n) =
                dgo.cwiseProduct(s.go).cwiseProduct((1.0 - s.go.array()).matrix());
            g.at("Wx") += dz * s.x.transpose();
            g.at("Wh") += dz * s.h_prev.transpose();
            g.at("b_lstm") += dz;
            dx = params_.at("Wx").transpose() * dz;
            dh_next = params_.at("Wh").transpose() * dz;
        } else {
            Vec dz = dh.cwiseProduct((s.h.array() > 0.0).cast<double>().matrix());
            g.at("W_d") += dz * s.x.transpose();
            g.at("b_d") += dz;
            dx = params_.at("W_d").transpose() * dz;
            dh_next.setZero();
        }

        Vec da1 = dx.head(dims_.obs_hidden);
        Vec da2 = dx.tail(dims_.fp_hidden);
        Vec dz1 = da1.cwiseProduct((s.a1.array() > 0.0).cast<double>().matrix());
        Vec dz2 = da2.cwiseProduct((s.a2.array() > 0.0).cast<double>().matrix());
        g.at("W_obs") += dz1 * s.obs.transpose();
        g.at("b_obs") += dz1;
        g.at("W_fp") += dz2 * s.fp.transpose();
        g.at("b_fp") += dz2;
    }
    return g;
}

std::string ActorCritic::serialize() const {
    json j;
    j["version"] = 1;
    j["use_lstm"] = use_lstm_;
    j["dims"] = {{"obs", dims_.obs},           {"fingerprint", dims_.fingerprint},
                 {"obs_hidden", dims_.obs_hidden}, {"fp_hidden", dims_.fp_hidden},
                 {"core", dims_.core},         {"actions", dims_.actions}};
    json tensors = json::object();
    for (const auto& [name, t] : params_.tensors) {
        json jt;
        jt["rows"] = t.rows();
        jt["cols"] = t.cols();
        std::vector<double> data;
        data.reserve(static_cast<size_t>(t.size()));
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(t(r, c));
        jt["data"] = data;
        tensors[name] = jt;
    }
    j["tensors"] = tensors;
    return j.dump();
}

ActorCritic ActorCritic::deserialize(const std::string& text) {
    json j = json::parse(text);
    if (j.value("version", 0) != 1) throw NnError("unsupported checkpoint version");
    Dims d;
    d.obs = j["dims"]["obs"];
    d.fingerprint = j["dims"]["fingerprint"];
    d.obs_hidden = j["dims"]["obs_hidden"];
    d.fp_hidden = j["dims"]["fp_hidden"];
    d.core = j["dims"]["core"];
    d.actions = j["dims"]["actions"];
    ActorCritic net(d, j["use_lstm"].get<bool>(), 0);
    for (auto& [name, jt] : j["tensors"].items()) {
        Mat& t = net.params_.at(name);
        int rows = jt["rows"], cols = jt["cols"];
        if (rows != t.rows() || cols != t.cols())
            throw NnError("checkpoint shape mismatch for " + name);
        const auto& data = jt["data"];
        size_t idx = 0;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) t(r, c) = data[idx++];
    }
    if (!net.params_.finite()) throw NnError("checkpoint holds non-finite values");
    return net;
}

void ActorCritic::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw NnError("cannot write checkpoint " + path);
    out << serialize() << "\n";
}

ActorCritic ActorCritic::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NnError("cannot read checkpoint " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

double entropy(const Vec& probs) {
    double h = 0.0;
    for (int i = 0; i < probs.size(); ++i)
        if (probs(i) > 0.0) h -= probs(i) * std::log(probs(i));
    return h;
}

Vec policy_logit_grad(const Vec& probs, int action, double advantage, double entropy_weight) {
    if (action < 0 || action >= probs.size()) throw NnError("action index out of range");
    Vec g = advantage * probs;
    g(action) -= advantage;
    if (entropy_weight != 0.0) {
        double h = entropy(probs);
        for (int i = 0; i < probs.size(); ++i) {
            double logp = probs(i) > 0.0 ? std::log(probs(i)) : 0.0;
            g(i) += entropy_weight * probs(i) * (logp + h);
        }
    }
    return g;
}

int sample_categorical(const Vec& probs, Rng& rng) {
    double u = rng.next_double();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
        acc += probs(i);
        if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;
}

} // namespace emv::nn

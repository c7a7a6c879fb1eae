#ifndef COTO_NN_HPP_
#define COTO_NN_HPP_

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coto/math.hpp"
#include "coto/rng.hpp"

namespace coto {

using Vec = std::vector<double>;

enum class Activation { kTanh, kIdentity };

inline std::string activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "identity";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + s);
}

// Dense feed-forward network. Weights are row-major (out x in).
class Mlp {
 public:
  struct Layer {
    std::size_t in = 0, out = 0;
    Vec weights;  // out*in, row-major
    Vec biases;   // out
    Activation act = Activation::kIdentity;
  };

  // Tape from a forward pass, consumed by backward().
  struct Tape {
    Vec input;
    std::vector<Vec> post;  // post-activation output of each layer
  };

  // Gradients, shape-congruent with the layers.
  struct Gradients {
    std::vector<Vec> dw;
    std::vector<Vec> db;

    void add_scaled(const Gradients& other, double scale) {
      for (std::size_t l = 0; l < dw.size(); ++l) {
        for (std::size_t i = 0; i < dw[l].size(); ++i)
          dw[l][i] += scale * other.dw[l][i];
        for (std::size_t i = 0; i < db[l].size(); ++i)
          db[l][i] += scale * other.db[l][i];
      }
    }

    double squared_norm() const {
      double s = 0.0;
      for (const auto& v : dw)
        for (double x : v) s += x * x;
      for (const auto& v : db)
        for (double x : v) s += x * x;
      return s;
    }

    void scale(double f) {
      for (auto& v : dw)
        for (double& x : v) x *= f;
      for (auto& v : db)
        for (double& x : v) x *= f;
    }

    bool finite() const {
      for (const auto& v : dw)
        for (double x : v)
          if (!std::isfinite(x)) return false;
      for (const auto& v : db)
        for (double x : v)
          if (!std::isfinite(x)) return false;
      return true;
    }
  };

  Mlp() = default;

  // sizes = {in, h1, ..., out}; hidden layers tanh, output layer identity.
  // Scaled-uniform init with the given gain on the output layer.
  static Mlp make(const std::vector<std::size_t>& sizes, Rng& rng,
                  double output_gain = 1.0, double hidden_gain = 1.0) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp: need >= 2 sizes");
    Mlp net;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      Layer layer;
      layer.in = sizes[l];
      layer.out = sizes[l + 1];
      bool last = (l + 2 == sizes.size());
      layer.act = last ? Activation::kIdentity : Activation::kTanh;
      double gain = last ? output_gain : hidden_gain;
      double bound = gain * std::sqrt(6.0 / double(layer.in + layer.out));
      layer.weights.resize(layer.in * layer.out);
      layer.biases.assign(layer.out, 0.0);
      for (double& w : layer.weights) w = rng.uniform(-bound, bound);
      net.layers_.push_back(std::move(layer));
    }
    return net;
  }

  std::size_t input_size() const { return layers_.front().in; }
  std::size_t output_size() const { return layers_.back().out; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Vec forward(const Vec& input, Tape* tape = nullptr) const {
    if (input.size() != input_size())
      throw std::invalid_argument("Mlp::forward: input size mismatch");
    if (tape) {
      tape->input = input;
      tape->post.clear();
    }
    Vec cur = input;
    for (const Layer& layer : layers_) {
      Vec next(layer.out);
      for (std::size_t o = 0; o < layer.out; ++o) {
        double z = layer.biases[o];
        const double* wrow = &layer.weights[o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) z += wrow[i] * cur[i];
        next[o] = layer.act == Activation::kTanh ? std::tanh(z) : z;
      }
      if (tape) tape->post.push_back(next);
      cur = std::move(next);
    }
    return cur;
  }

  // Gradient of <output_grad, output> with respect to all parameters.
  Gradients backward(const Tape& tape, const Vec& output_grad) const {
    if (tape.post.size() != layers_.size())
      throw std::invalid_argument("Mlp::backward: stale or mismatched tape");
    if (output_grad.size() != output_size())
      throw std::invalid_argument("Mlp::backward: output_grad size mismatch");
    Gradients g = zero_gradients();
    Vec delta = output_grad;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& layer = layers_[li];
      const Vec& out = tape.post[li];
      const Vec& in = li == 0 ? tape.input : tape.post[li - 1];
      // through the activation
      if (layer.act == Activation::kTanh) {
        for (std::size_t o = 0; o < layer.out; ++o)
          delta[o] *= 1.0 - out[o] * out[o];
      }
      for (std::size_t o = 0; o < layer.out; ++o) {
        g.db[li][o] = delta[o];
        double* gw = &g.dw[li][o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) gw[i] = delta[o] * in[i];
      }
      if (li > 0) {
        Vec prev(layer.in, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
          const double* wrow = &layer.weights[o * layer.in];
          for (std::size_t i = 0; i < layer.in; ++i)
            prev[i] += wrow[i] * delta[o];
        }
        delta = std::move(prev);
      }
    }
    return g;
  }

  Gradients zero_gradients() const {
    Gradients g;
    g.dw.reserve(layers_.size());
    g.db.reserve(layers_.size());
    for (const Layer& layer : layers_) {
      g.dw.emplace_back(layer.weights.size(), 0.0);
      g.db.emplace_back(layer.biases.size(), 0.0);
    }
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& layer : layers_)
      n += layer.weights.size() + layer.biases.size();
    return n;
  }

  // Flat parameter access, used by finite-difference tests.
  double get_parameter(std::size_t idx) const {
    return *locate(const_cast<Mlp*>(this), idx);
  }
  void set_parameter(std::size_t idx, double v) { *locate(this, idx) = v; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const Layer& layer : layers_) {
      nlohmann::json lj;
      lj["in"] = layer.in;
      lj["out"] = layer.out;
      lj["activation"] = activation_name(layer.act);
      lj["weights"] = layer.weights;
      lj["biases"] = layer.biases;
      j["layers"].push_back(std::move(lj));
    }
    return j;
  }

  static Mlp from_json(const nlohmann::json& j) {
    Mlp net;
    for (const auto& lj : j.at("layers")) {
      Layer layer;
      layer.in = lj.at("in").get<std::size_t>();
      layer.out = lj.at("out").get<std::size_t>();
      layer.act = activation_from_name(lj.at("activation").get<std::string>());
      layer.weights = lj.at("weights").get<Vec>();
      layer.biases = lj.at("biases").get<Vec>();
      if (layer.weights.size() != layer.in * layer.out ||
          layer.biases.size() != layer.out)
        throw std::invalid_argument("Mlp::from_json: shape mismatch");
      net.layers_.push_back(std::move(layer));
    }
    if (net.layers_.empty())
      throw std::invalid_argument("Mlp::from_json: no layers");
    return net;
  }

 private:
  static double* locate(Mlp* net, std::size_t idx) {
    for (Layer& layer : net->layers_) {
      if (idx < layer.weights.size()) return &layer.weights[idx];
      idx -= layer.weights.size();
      if (idx < layer.biases.size()) return &layer.biases[idx];
      idx -= layer.biases.size();
    }
    throw std::out_of_range("Mlp parameter index");
  }

  std::vector<Layer> layers_;
};

// Adam with bias correction. Moments are shape-congruent with the network.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const Mlp& net, double lr = 3e-4, double beta1 = 0.9,
            double beta2 = 0.999, double eps = 1e-5)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_ = net.zero_gradients();
    v_ = net.zero_gradients();
  }

  // Applies one update; non-finite gradients skip the update and return
  // false.
  bool step(Mlp& net, const Mlp::Gradients& grads) {
    if (!grads.finite()) {
      ++step_count_;
      return false;
    }
    ++step_count_;
    double bc1 = 1.0 - std::pow(beta1_, double(step_count_));
    double bc2 = 1.0 - std::pow(beta2_, double(step_count_));
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto& layer = net.layers()[l];
      update_block(layer.weights, grads.dw[l], m_.dw[l], v_.dw[l], bc1, bc2);
      update_block(layer.biases, grads.db[l], m_.db[l], v_.db[l], bc1, bc2);
    }
    return true;
  }

  long step_count() const { return step_count_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["lr"] = lr_;
    j["beta1"] = beta1_;
    j["beta2"] = beta2_;
    j["eps"] = eps_;
    j["step_count"] = step_count_;
    j["m_w"] = m_.dw;
    j["m_b"] = m_.db;
    j["v_w"] = v_.dw;
    j["v_b"] = v_.db;
    return j;
  }

 private:
  void update_block(Vec& params, const Vec& g, Vec& m, Vec& v, double bc1,
                    double bc2) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-5;
  long step_count_ = 0;
  Mlp::Gradients m_, v_;
};

}  // namespace coto

#endif  // COTO_NN_HPP_

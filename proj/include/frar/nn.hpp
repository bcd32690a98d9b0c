#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "frar/error.hpp"
#include "frar/rng.hpp"
#include "frar/tensor.hpp"

// Small MLP building blocks, Adam, and the parameter checkpoint format.

namespace frar {

// Named parameter tensors in registration order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Shape shape, std::vector<double> data) {
    for (auto& [n, t] : items_)
      if (n == name) throw std::runtime_error("parameter registered twice: " + name);
    Tensor t = Tensor::parameter(std::move(shape), std::move(data));
    items_.emplace_back(name, t);
    return t;
  }

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  Tensor find(const std::string& name) const {
    for (auto& [n, t] : items_)
      if (n == name) return t;
    throw std::runtime_error("no such parameter: " + name);
  }

  std::size_t total_size() const {
    std::size_t s = 0;
    for (auto& [n, t] : items_) s += t.size();
    return s;
  }

  void zero_grad() {
    for (auto& [n, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Weights uniform in (-sqrt(1/fan_in), +sqrt(1/fan_in)), zero biases.
inline std::vector<double> init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return w;
}

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng) {
    weight = store.add(name + ".w", {in, out}, init_weight(in, out, rng));
    bias = store.add(name + ".b", {out}, std::vector<double>(out, 0.0));
  }

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

// Fully connected stack with ReLU between layers, linear output.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, std::size_t in,
      const std::vector<int>& hidden, std::size_t out, Rng& rng) {
    std::size_t d = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layers.emplace_back(store, name + ".l" + std::to_string(i), d,
                          static_cast<std::size_t>(hidden[i]), rng);
      d = static_cast<std::size_t>(hidden[i]);
    }
    layers.emplace_back(store, name + ".l" + std::to_string(hidden.size()), d, out, rng);
  }

  Tensor operator()(Tensor x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = relu(x);
    }
    return x;
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over one ParameterStore.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  void step(ParameterStore& store) {
    if (m_.empty()) {
      for (auto& [name, t] : store.items()) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
      }
    }
    if (m_.size() != store.items().size()) throw std::runtime_error("adam: store changed size");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < store.items().size(); ++p) {
      Tensor& t = store.items()[p].second;
      const auto& g = t.grad();
      if (g.size() != m_[p].size())
        throw ShapeError("adam: grad size " + std::to_string(g.size()) + " vs state " +
                         std::to_string(m_[p].size()));
      auto& val = t.mutable_value();
      for (std::size_t i = 0; i < val.size(); ++i) {
        m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
        v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m_[p][i] / bc1;
        const double vhat = v_[p][i] / bc2;
        val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// target <- tau * online + (1 - tau) * target
inline void soft_update(ParameterStore& target, const ParameterStore& online, double tau) {
  if (target.items().size() != online.items().size())
    throw ShapeError("soft_update: stores differ in parameter count");
  for (std::size_t p = 0; p < target.items().size(); ++p) {
    Tensor& t = target.items()[p].second;
    const Tensor& o = online.items()[p].second;
    if (t.shape() != o.shape())
      throw ShapeError("soft_update: shapes " + shape_str(t.shape()) + " vs " +
                       shape_str(o.shape()));
    auto& tv = t.mutable_value();
    const auto& ov = o.value();
    for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = tau * ov[i] + (1.0 - tau) * tv[i];
  }
}

inline void copy_parameters(ParameterStore& dst, const ParameterStore& src) {
  soft_update(dst, src, 1.0);
}

// ---------------------------------------------------------------------------
// Checkpoint format
//
// Binary, little endian:
//   magic  "FRARPRM1"                      (8 bytes)
//   u32    meta length, then meta bytes    (free-form JSON)
//   u32    parameter count
//   per parameter:
//     u32 name length, name bytes
//     u32 rank, u64 dims[rank]
//     f64 data[prod(dims)]
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint: truncated while reading " + what);
  return v;
}

}  // namespace detail

constexpr char kCheckpointMagic[8] = {'F', 'R', 'A', 'R', 'P', 'R', 'M', '1'};

inline void save_checkpoint(std::ostream& os, const std::string& meta,
                            const std::vector<const ParameterStore*>& stores) {
  os.write(kCheckpointMagic, 8);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  std::uint32_t count = 0;
  for (auto* s : stores) count += static_cast<std::uint32_t>(s->items().size());
  detail::write_pod<std::uint32_t>(os, count);
  for (auto* s : stores) {
    for (const auto& [name, t] : s->items()) {
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
      for (auto d : t.shape()) detail::write_pod<std::uint64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.value().data()),
               static_cast<std::streamsize>(t.value().size() * sizeof(double)));
    }
  }
  if (!os) throw IoError("checkpoint: write failed");
}

inline void save_checkpoint(const std::string& path, const std::string& meta,
                            const std::vector<const ParameterStore*>& stores) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  save_checkpoint(os, meta, stores);
}

struct CheckpointData {
  std::string meta;
  std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> params;

  const std::pair<Shape, std::vector<double>>* find(const std::string& name) const {
    for (auto& [n, p] : params)
      if (n == name) return &p;
    return nullptr;
  }
};

inline CheckpointData load_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError("checkpoint: bad magic (not a checkpoint file or wrong version)");
  CheckpointData out;
  const auto meta_len = detail::read_pod<std::uint32_t>(is, "meta length");
  out.meta.resize(meta_len);
  is.read(out.meta.data(), meta_len);
  if (!is) throw IoError("checkpoint: truncated meta");
  const auto count = detail::read_pod<std::uint32_t>(is, "parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint: truncated name");
    const auto rank = detail::read_pod<std::uint32_t>(is, "rank");
    Shape shape(rank);
    for (auto& d : shape)
      d = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is, "dimension"));
    std::vector<double> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw IoError("checkpoint: truncated data for " + name);
    out.params.emplace_back(std::move(name), std::make_pair(std::move(shape), std::move(data)));
  }
  return out;
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  return load_checkpoint(is);
}

// Restores values into an existing store; shapes must match exactly.
inline void restore_parameters(ParameterStore& store, const CheckpointData& ckpt) {
  for (auto& [name, t] : store.items()) {
    const auto* p = ckpt.find(name);
    if (!p) throw IoError("checkpoint: missing parameter " + name);
    if (p->first != t.shape())
      throw ShapeError("checkpoint: parameter " + name + " has shape " + shape_str(p->first) +
                       ", model expects " + shape_str(t.shape()));
    t.mutable_value() = p->second;
  }
}

}  // namespace frar

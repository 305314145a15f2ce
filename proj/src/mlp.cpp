#include "usamkit/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

#include "usamkit/error.hpp"
#include "usamkit/gemm.hpp"
#include "usamkit/rng.hpp"

namespace usamkit {

namespace {

double relu(double x) { return x > 0.0 ? x : 0.0; }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_dims(int in_dim, int hidden_dim) {
  if (in_dim < 1 || hidden_dim < 1)
    fail("Mlp: dimensions must be positive");
}

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.next() % i]);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 5 || epochs > 80) fail("TrainConfig: epochs must be in [5,80]");
  if (batch_size < 16 || batch_size > 256)
    fail("TrainConfig: batch_size must be in [16,256]");
  if (!(learning_rate >= 1e-4 && learning_rate <= 0.1))
    fail("TrainConfig: learning_rate must be in [1e-4,0.1]");
  if (!(momentum >= 0.1 && momentum <= 0.9))
    fail("TrainConfig: momentum must be in [0.1,0.9]");
  if (!(weight_decay >= 0.0))
    fail("TrainConfig: weight_decay must be non-negative");
}

Mlp Mlp::zeros(int in_dim, int hidden_dim) {
  check_dims(in_dim, hidden_dim);
  Mlp p;
  p.in_dim = in_dim;
  p.hidden_dim = hidden_dim;
  p.w1.assign(size_t(in_dim) * hidden_dim, 0.0);
  p.b1.assign(size_t(hidden_dim), 0.0);
  p.w2.assign(size_t(hidden_dim) * hidden_dim, 0.0);
  p.b2.assign(size_t(hidden_dim), 0.0);
  p.w3.assign(size_t(hidden_dim), 0.0);
  p.b3 = 0.0;
  return p;
}

Mlp Mlp::he_uniform(int in_dim, int hidden_dim, uint64_t seed) {
  Mlp p = zeros(in_dim, hidden_dim);
  Rng rng(seed);
  const double lim1 = std::sqrt(6.0 / in_dim);
  const double lim2 = std::sqrt(6.0 / hidden_dim);
  for (double& w : p.w1) w = rng.uniform(-lim1, lim1);
  for (double& w : p.w2) w = rng.uniform(-lim2, lim2);
  for (double& w : p.w3) w = rng.uniform(-lim2, lim2);
  return p;
}

double Mlp::forward(std::span<const double> x) const {
  if (int(x.size()) != in_dim) fail("Mlp::forward: input dimension mismatch");
  for (double v : x)
    if (!std::isfinite(v)) fail("Mlp::forward: non-finite input");

  std::vector<double> a1(static_cast<size_t>(hidden_dim));
  gemm_nn(1, in_dim, hidden_dim, x.data(), w1.data(), a1.data());
  for (int j = 0; j < hidden_dim; ++j) a1[size_t(j)] = relu(a1[size_t(j)] + b1[size_t(j)]);

  std::vector<double> a2(static_cast<size_t>(hidden_dim));
  gemm_nn(1, hidden_dim, hidden_dim, a1.data(), w2.data(), a2.data());
  for (int j = 0; j < hidden_dim; ++j) a2[size_t(j)] = relu(a2[size_t(j)] + b2[size_t(j)]);

  double z3 = 0.0;
  gemm_nn(1, hidden_dim, 1, a2.data(), w3.data(), &z3);
  return sigmoid(z3 + b3);
}

MlpGrad MlpGrad::zeros_like(const Mlp& p) {
  MlpGrad g;
  g.w1.assign(p.w1.size(), 0.0);
  g.b1.assign(p.b1.size(), 0.0);
  g.w2.assign(p.w2.size(), 0.0);
  g.b2.assign(p.b2.size(), 0.0);
  g.w3.assign(p.w3.size(), 0.0);
  g.b3 = 0.0;
  return g;
}

Velocity Velocity::zeros_like(const Mlp& p) {
  Velocity v;
  v.w1.assign(p.w1.size(), 0.0);
  v.b1.assign(p.b1.size(), 0.0);
  v.w2.assign(p.w2.size(), 0.0);
  v.b2.assign(p.b2.size(), 0.0);
  v.w3.assign(p.w3.size(), 0.0);
  v.b3 = 0.0;
  return v;
}

MlpGrad mlp_grad(const Mlp& p, std::span<const double> x, double target) {
  const int in = p.in_dim, hid = p.hidden_dim;

  std::vector<double> z1(static_cast<size_t>(hid)), a1(static_cast<size_t>(hid));
  gemm_nn(1, in, hid, x.data(), p.w1.data(), z1.data());
  for (int j = 0; j < hid; ++j) {
    z1[size_t(j)] += p.b1[size_t(j)];
    a1[size_t(j)] = relu(z1[size_t(j)]);
  }
  std::vector<double> z2(static_cast<size_t>(hid)), a2(static_cast<size_t>(hid));
  gemm_nn(1, hid, hid, a1.data(), p.w2.data(), z2.data());
  for (int j = 0; j < hid; ++j) {
    z2[size_t(j)] += p.b2[size_t(j)];
    a2[size_t(j)] = relu(z2[size_t(j)]);
  }
  double z3 = 0.0;
  gemm_nn(1, hid, 1, a2.data(), p.w3.data(), &z3);
  const double out = sigmoid(z3 + p.b3);

  MlpGrad g = MlpGrad::zeros_like(p);
  const double g3 = (out - target) * out * (1.0 - out);
  g.b3 = g3;
  std::vector<double> d2(static_cast<size_t>(hid));
  for (int j = 0; j < hid; ++j) {
    g.w3[size_t(j)] = g3 * a2[size_t(j)];
    d2[size_t(j)] = z2[size_t(j)] > 0.0 ? g3 * p.w3[size_t(j)] : 0.0;
  }
  std::vector<double> d1(static_cast<size_t>(hid));
  for (int i = 0; i < hid; ++i) {
    g.b2[size_t(i)] = d2[size_t(i)];
    double acc = 0.0;
    for (int j = 0; j < hid; ++j) acc += p.w2[size_t(i) * hid + j] * d2[size_t(j)];
    d1[size_t(i)] = z1[size_t(i)] > 0.0 ? acc : 0.0;
  }
  for (int i = 0; i < hid; ++i) {
    g.b1[size_t(i)] = d1[size_t(i)];
    for (int j = 0; j < hid; ++j)
      g.w2[size_t(i) * hid + j] = a1[size_t(i)] * d2[size_t(j)];
  }
  for (int k = 0; k < in; ++k)
    for (int i = 0; i < hid; ++i)
      g.w1[size_t(k) * hid + i] = x[size_t(k)] * d1[size_t(i)];
  return g;
}

void sgd_step(Mlp& p, const MlpGrad& grad, Velocity& v,
              const TrainConfig& cfg) {
  auto step = [&](std::vector<double>& param, const std::vector<double>& g,
                  std::vector<double>& vel) {
    if (param.size() != g.size() || param.size() != vel.size())
      fail("sgd_step: shape mismatch");
    for (size_t i = 0; i < param.size(); ++i) {
      vel[i] = cfg.momentum * vel[i] + g[i] + cfg.weight_decay * param[i];
      param[i] -= cfg.learning_rate * vel[i];
    }
  };
  step(p.w1, grad.w1, v.w1);
  step(p.b1, grad.b1, v.b1);
  step(p.w2, grad.w2, v.w2);
  step(p.b2, grad.b2, v.b2);
  step(p.w3, grad.w3, v.w3);
  v.b3 = cfg.momentum * v.b3 + grad.b3 + cfg.weight_decay * p.b3;
  p.b3 -= cfg.learning_rate * v.b3;
}

namespace {

// One batched forward pass keeping pre-activation signs; every output
// element accumulates k-ascending, matching Mlp::forward bitwise.
struct BatchActivations {
  std::vector<double> a1, a2, out;
  std::vector<uint8_t> pos1, pos2;  // relu gates
};

BatchActivations batch_pass(const Mlp& p, const double* X, int n) {
  const int in = p.in_dim, hid = p.hidden_dim;
  BatchActivations act;
  act.a1.resize(size_t(n) * hid);
  act.a2.resize(size_t(n) * hid);
  act.out.resize(size_t(n));
  act.pos1.assign(size_t(n) * hid, 0);
  act.pos2.assign(size_t(n) * hid, 0);

  gemm_nn(n, in, hid, X, p.w1.data(), act.a1.data());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < hid; ++j) {
      double& v = act.a1[size_t(i) * hid + j];
      v += p.b1[size_t(j)];
      act.pos1[size_t(i) * hid + j] = v > 0.0;
      v = relu(v);
    }
  gemm_nn(n, hid, hid, act.a1.data(), p.w2.data(), act.a2.data());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < hid; ++j) {
      double& v = act.a2[size_t(i) * hid + j];
      v += p.b2[size_t(j)];
      act.pos2[size_t(i) * hid + j] = v > 0.0;
      v = relu(v);
    }
  gemm_nn(n, hid, 1, act.a2.data(), p.w3.data(), act.out.data());
  for (int i = 0; i < n; ++i) act.out[size_t(i)] = sigmoid(act.out[size_t(i)] + p.b3);
  return act;
}

}  // namespace

TrainResult train_mlp(const Dataset& data, const TrainConfig& cfg,
                      int hidden_dim) {
  cfg.validate();
  if (data.size() == 0) fail("train_mlp: empty dataset");
  if (data.dim < 1) fail("train_mlp: dataset dimension must be positive");
  if (data.inputs.size() != data.size() * size_t(data.dim))
    fail("train_mlp: inputs/targets size mismatch");
  for (double t : data.targets)
    if (!(t >= 0.0 && t <= 1.0))
      fail("train_mlp: target outside [0,1]; map signed targets first");

  const int n = int(data.size());
  const int in = data.dim, hid = hidden_dim;
  TrainResult res;
  res.model = Mlp::he_uniform(in, hid, cfg.seed);
  Velocity vel = Velocity::zeros_like(res.model);
  MlpGrad grad = MlpGrad::zeros_like(res.model);

  std::vector<size_t> order(static_cast<size_t>(n));
  std::vector<double> bx, by, g3, d2, d1;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t(0));
    Rng rng(mix64(cfg.seed, 0x5f0f1e, uint64_t(epoch)));
    shuffle_indices(order, rng);

    double epoch_sq = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int b = std::min(cfg.batch_size, n - start);
      bx.resize(size_t(b) * in);
      by.resize(size_t(b));
      for (int i = 0; i < b; ++i) {
        const size_t src = order[size_t(start + i)];
        std::copy_n(data.input(src).data(), in, bx.data() + size_t(i) * in);
        by[size_t(i)] = data.targets[src];
      }

      const BatchActivations act = batch_pass(res.model, bx.data(), b);
      g3.resize(size_t(b));
      for (int i = 0; i < b; ++i) {
        const double diff = act.out[size_t(i)] - by[size_t(i)];
        epoch_sq += diff * diff;
        g3[size_t(i)] = diff * act.out[size_t(i)] *
                        (1.0 - act.out[size_t(i)]) / double(b);
      }

      // Backprop, batch-mean gradients.
      gemm_tn(hid, b, 1, act.a2.data(), g3.data(), grad.w3.data());
      grad.b3 = 0.0;
      for (int i = 0; i < b; ++i) grad.b3 += g3[size_t(i)];

      d2.resize(size_t(b) * hid);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < hid; ++j)
          d2[size_t(i) * hid + j] = act.pos2[size_t(i) * hid + j]
                                        ? g3[size_t(i)] * res.model.w3[size_t(j)]
                                        : 0.0;
      gemm_tn(hid, b, hid, act.a1.data(), d2.data(), grad.w2.data());
      std::fill(grad.b2.begin(), grad.b2.end(), 0.0);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < hid; ++j)
          grad.b2[size_t(j)] += d2[size_t(i) * hid + j];

      d1.resize(size_t(b) * hid);
      gemm_nt(b, hid, hid, d2.data(), res.model.w2.data(), d1.data());
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < hid; ++j)
          if (!act.pos1[size_t(i) * hid + j]) d1[size_t(i) * hid + j] = 0.0;
      gemm_tn(in, b, hid, bx.data(), d1.data(), grad.w1.data());
      std::fill(grad.b1.begin(), grad.b1.end(), 0.0);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < hid; ++j)
          grad.b1[size_t(j)] += d1[size_t(i) * hid + j];

      sgd_step(res.model, grad, vel, cfg);
    }
    res.epoch_loss.push_back(epoch_sq / double(n));
  }
  return res;
}

std::vector<double> batch_forward(const Mlp& model, const Dataset& data) {
  if (data.dim != model.in_dim)
    fail("batch_forward: dataset dimension mismatch");
  if (data.size() == 0) return {};
  return batch_pass(model, data.inputs.data(), int(data.size())).out;
}

double mean_squared_error(const Mlp& model, const Dataset& data) {
  if (data.size() == 0) fail("mean_squared_error: empty dataset");
  const std::vector<double> out = batch_forward(model, data);
  double acc = 0.0;
  for (size_t i = 0; i < out.size(); ++i) {
    const double d = out[i] - data.targets[i];
    acc += d * d;
  }
  return acc / double(out.size());
}

SearchResult random_search(const Dataset& data, int trials, uint64_t seed,
                           int hidden_dim) {
  if (trials < 1) fail("random_search: trials must be >= 1");
  const size_t n = data.size();
  if (n < 2) fail("random_search: dataset too small for an 80/20 split");
  const size_t n_train = std::max<size_t>(1, n * 4 / 5);

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  Rng split_rng(mix64(seed, 0x5b117));
  shuffle_indices(order, split_rng);

  auto subset = [&](size_t lo, size_t hi) {
    Dataset d;
    d.dim = data.dim;
    for (size_t i = lo; i < hi; ++i) {
      const auto x = data.input(order[i]);
      d.inputs.insert(d.inputs.end(), x.begin(), x.end());
      d.targets.push_back(data.targets[order[i]]);
    }
    return d;
  };
  const Dataset train = subset(0, n_train);
  const Dataset val = subset(n_train, n);

  SearchResult res;
  for (int t = 0; t < trials; ++t) {
    Rng rng(mix64(seed, 0xd4a3, uint64_t(t)));
    TrainConfig cfg;
    cfg.epochs = int(rng.uniform_int(5, 80));
    cfg.batch_size = int(rng.uniform_int(16, 256));
    cfg.learning_rate = std::exp(rng.uniform(std::log(1e-4), std::log(0.1)));
    cfg.momentum = rng.uniform(0.1, 0.9);
    cfg.weight_decay = 1e-3;
    cfg.seed = mix64(seed, 0x1417, uint64_t(t));

    const TrainResult tr = train_mlp(train, cfg, hidden_dim);
    const double mse = mean_squared_error(tr.model, val);
    res.trial_val_mse.push_back(mse);
    if (t == 0 || mse < res.best_val_mse) {
      res.best = cfg;
      res.best_val_mse = mse;
    }
  }
  return res;
}

namespace {

constexpr char kMagic[8] = {'U', 'S', 'A', 'M', 'M', 'L', 'P', '\0'};
constexpr uint32_t kCheckpointVersion = 1;

void put_u32(std::ofstream& f, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  f.write(b, 4);
}

void put_f64(std::ofstream& f, double v) {
  const uint64_t bits = std::bit_cast<uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((bits >> (8 * i)) & 0xff);
  f.write(b, 8);
}

uint32_t get_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    fail("load_checkpoint: truncated file " + path);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& f, const std::string& path) {
  unsigned char b[8];
  if (!f.read(reinterpret_cast<char*>(b), 8))
    fail("load_checkpoint: truncated file " + path);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= uint64_t(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const Mlp& p, const std::string& path) {
  check_dims(p.in_dim, p.hidden_dim);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("save_checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  put_u32(f, kCheckpointVersion);
  put_u32(f, uint32_t(p.in_dim));
  put_u32(f, uint32_t(p.hidden_dim));
  for (const auto* v : {&p.w1, &p.b1, &p.w2, &p.b2, &p.w3})
    for (double x : *v) put_f64(f, x);
  put_f64(f, p.b3);
  if (!f) fail("save_checkpoint: write failed for " + path);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("load_checkpoint: cannot open " + path);
  char magic[8];
  if (!f.read(magic, 8) || !std::equal(magic, magic + 8, kMagic))
    fail("load_checkpoint: " + path + " is not a parameter checkpoint");
  const uint32_t version = get_u32(f, path);
  if (version != kCheckpointVersion)
    fail("load_checkpoint: unsupported version " + std::to_string(version) +
         " in " + path);
  const uint32_t in = get_u32(f, path);
  const uint32_t hid = get_u32(f, path);
  if (in < 1 || hid < 1 || in > (1u << 20) || hid > (1u << 20))
    fail("load_checkpoint: implausible shape table in " + path);
  Mlp p = Mlp::zeros(int(in), int(hid));
  for (auto* v : {&p.w1, &p.b1, &p.w2, &p.b2, &p.w3})
    for (double& x : *v) x = get_f64(f, path);
  p.b3 = get_f64(f, path);
  char extra;
  if (f.read(&extra, 1))
    fail("load_checkpoint: trailing bytes in " + path);
  return p;
}

}  // namespace usamkit

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace usamkit {

// Hyperparameter box constraints for the seeded random search.
struct TrainConfig {
  int epochs = 20;            // [5, 80]
  int batch_size = 64;        // [16, 256]
  double learning_rate = 1e-2;  // [1e-4, 0.1], log-uniform in search
  double momentum = 0.9;      // [0.1, 0.9]
  double weight_decay = 1e-3;  // fixed by convention; applied to biases too
  uint64_t seed = 0;

  void validate() const;
};

// in -> hidden -> hidden -> 1, ReLU hidden activations, sigmoid output.
// Weight layouts put the output index innermost so forward products
// accumulate k-ascending (see gemm.hpp).
struct Mlp {
  int in_dim = 0;
  int hidden_dim = 0;
  std::vector<double> w1;  // in_dim x hidden_dim
  std::vector<double> b1;  // hidden_dim
  std::vector<double> w2;  // hidden_dim x hidden_dim
  std::vector<double> b2;  // hidden_dim
  std::vector<double> w3;  // hidden_dim
  double b3 = 0.0;

  static Mlp zeros(int in_dim, int hidden_dim);
  // He-uniform weights (limit sqrt(6/fan_in)), zero biases.
  static Mlp he_uniform(int in_dim, int hidden_dim, uint64_t seed);

  // sigmoid(w3 . relu(W2^T relu(W1^T x + b1) + b2) + b3); throws on
  // non-finite input.
  double forward(std::span<const double> x) const;
};

struct MlpGrad {
  std::vector<double> w1, b1, w2, b2, w3;
  double b3 = 0.0;

  static MlpGrad zeros_like(const Mlp& p);
};

// Gradient of 0.5 * (forward(x) - target)^2 w.r.t. all parameters.
MlpGrad mlp_grad(const Mlp& p, std::span<const double> x, double target);

struct Velocity {
  std::vector<double> w1, b1, w2, b2, w3;
  double b3 = 0.0;

  static Velocity zeros_like(const Mlp& p);
};

// v <- momentum * v + grad + weight_decay * p;  p <- p - lr * v
void sgd_step(Mlp& p, const MlpGrad& grad, Velocity& v,
              const TrainConfig& cfg);

struct Dataset {
  int dim = 0;
  std::vector<double> inputs;   // n x dim, row-major
  std::vector<double> targets;  // n, each in [0,1]

  size_t size() const { return targets.size(); }
  std::span<const double> input(size_t i) const {
    return {inputs.data() + i * size_t(dim), size_t(dim)};
  }
};

struct TrainResult {
  Mlp model;
  std::vector<double> epoch_loss;  // mean squared error per epoch
};

// Mini-batch SGD-with-momentum, per-epoch seeded shuffle, fixed-order f64
// accumulation throughout: bitwise deterministic per (dataset, cfg).
TrainResult train_mlp(const Dataset& data, const TrainConfig& cfg,
                      int hidden_dim = 512);

// Batched inference; row i equals model.forward(input(i)) bitwise.
std::vector<double> batch_forward(const Mlp& model, const Dataset& data);

double mean_squared_error(const Mlp& model, const Dataset& data);

struct SearchResult {
  TrainConfig best;
  double best_val_mse = 0.0;
  std::vector<double> trial_val_mse;
};

// Seeded uniform draws within the TrainConfig ranges (log-uniform learning
// rate), trained on a shuffled 80% split, ranked by validation MSE.
SearchResult random_search(const Dataset& data, int trials, uint64_t seed,
                           int hidden_dim = 512);

// Binary checkpoint: magic + version + shape table + little-endian f64.
void save_checkpoint(const Mlp& p, const std::string& path);
Mlp load_checkpoint(const std::string& path);

}  // namespace usamkit

#pragma once

#include "isoimm/datasets.hpp"
#include "isoimm/geometry.hpp"
#include "isoimm/losses.hpp"
#include "isoimm/mlp.hpp"
#include "isoimm/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace isoimm {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Moments start empty and are sized on the first step.
AdamState make_adam(double lr);

/// One bias-corrected ADAM update of every tensor in `params`.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

/// W0, b0, W1, b1, ... in layer order.
std::vector<Tensor*> parameter_tensors(MlpParams& p);

enum class SamplerKind { Knn, Ball };

struct TrainConfig {
  LossWeights weights;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden{64, 64};
  ActivationKind activation = ActivationKind::Tanh;
  std::size_t k = 8;
  SamplerKind sampler = SamplerKind::Knn;
  double ball_radius = 0.05;
  std::size_t outer_iters = 2000;
  std::size_t inner_imm_iters = 5;
  std::size_t inner_iso_iters = 5;
  std::size_t batch_size = 0;  // 0: whole cloud when N <= 2000, else 256
  double lr_theta = 1e-3;
  double lr_omega = 1e-3;
  std::uint64_t seed = 1;

  std::size_t effective_batch(std::size_t n) const;
  void validate(std::size_t n) const;
};

struct TrainState {
  MlpParams encoder;
  MlpParams decoder;
  MlpParams dual;
  AdamState adam_theta;  // encoder tensors, then decoder tensors
  AdamState adam_omega;
  std::size_t outer_iter = 0;
  std::vector<LossReport> history;
};

/// Fresh networks for ambient dim s. The dual map starts as a copy of the decoder.
TrainState init_state(std::size_t ambient_dim, const TrainConfig& cfg);

/// batch_size distinct indices of [0, n), uniformly without replacement, in random order.
std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, Rng& rng);

/// One mini-batch with its neighborhoods. Ball neighborhoods are stored as
/// offsets from the center so they follow the center when latents move.
struct StepBatch {
  Matrix x;  // B x s
  std::vector<std::size_t> indices;
  std::vector<NeighborhoodSample> neighborhoods;
  SamplerKind sampler = SamplerKind::Knn;
};

/// Encode the batch, then sample one neighborhood around every batch row.
StepBatch prepare_batch(const TrainState& state, const PointCloud& cloud, std::vector<std::size_t> indices,
                        const TrainConfig& cfg, Rng& sampler_rng);

/// Latent points of neighborhood `nb` given the current batch codes.
Matrix neighborhood_points(const NeighborhoodSample& nb, const Matrix& codes, SamplerKind sampler);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// inner_imm_iters ADAM steps on (encoder, decoder) against alpha*l_re + beta*l_tm + gamma*l_du.
/// The dual map and its optimizer state are not touched. Returns the last evaluated loss.
double e_step(TrainState& state, const StepBatch& batch, const TrainConfig& cfg);

/// inner_iso_iters ADAM steps on the dual map against epsilon*l_is + gamma*l_du.
/// Encoder, decoder and their optimizer state are not touched.
double m_step(TrainState& state, const StepBatch& batch, const TrainConfig& cfg);

/// All losses at the current parameters on one batch.
LossReport evaluate_losses(const TrainState& state, const StepBatch& batch, const TrainConfig& cfg);

enum class StepPhase { BeforeE, AfterE, BeforeM, AfterM };
using TrainObserver = std::function<void(StepPhase, const TrainState&)>;

struct TrainResult {
  TrainState state;
  LatentBatch latents;                    // every cloud point, encoded
  std::vector<MetricTensor> metric_field;  // pullback metric at each latent
};

class TrainingDiverged : public TrainingError {
 public:
  TrainingDiverged(const std::string& what, TrainState last_good)
      : TrainingError(what), last_good_(std::move(last_good)) {}
  const TrainState& last_good() const { return last_good_; }

 private:
  TrainState last_good_;
};

/// Losses above this abort training.
inline constexpr double kDivergenceThreshold = 1e6;

/// Alternating E/M training: per outer iteration draw a batch, encode it, build
/// neighborhoods, run the E step, then the M step, then log all losses.
TrainResult train_loop(const PointCloud& cloud, const TrainConfig& cfg, const TrainObserver& observer = {});

/// Encode every cloud point and evaluate the dual map's pullback metric at each code.
TrainResult finalize(TrainState state, const PointCloud& cloud);

/// CSV: iteration, l_re, l_tm, l_is, l_du, l_immersion, l_isometry.
std::string training_log_csv(const std::vector<LossReport>& history);

}  // namespace isoimm

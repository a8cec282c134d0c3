#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "nef/config.hpp"
#include "nef/eigenmodel.hpp"
#include "nef/errors.hpp"
#include "nef/feature_io.hpp"
#include "nef/graph_kernel.hpp"
#include "nef/patchset.hpp"
#include "nef/tape.hpp"
#include "nef/tensor.hpp"

namespace nef {

// Where a training step gets its batch kernel. The default source runs the
// graph construction on the batch; a fixed source serves slices of a
// precomputed matrix, which is how a training run can target an arbitrary
// kernel (and how the solver is validated against exact eigendecompositions).
class KernelSource {
 public:
  virtual ~KernelSource() = default;
  virtual Tensor<double> batch(const PatchSet& batch) = 0;
};

class GraphKernelSource : public KernelSource {
 public:
  explicit GraphKernelSource(KernelConfig cfg) : cfg_(cfg) { cfg_.validate(); }
  Tensor<double> batch(const PatchSet& b) override { return batch_kernel(b, cfg_); }

 private:
  KernelConfig cfg_;
};

// Serves kernel[gi, gj] for the batch's global indices. The full matrix must
// be symmetric within 1e-8; slicing with one index list keeps it so.
class FixedKernelSource : public KernelSource {
 public:
  explicit FixedKernelSource(Tensor<double> full);
  Tensor<double> batch(const PatchSet& b) override;

 private:
  Tensor<double> full_;
};

// Per-step training trace plus the final spectrum estimate. Losses, rates,
// temperatures, and constraint deviations are parallel arrays, one entry per
// optimizer step; r_diag holds the K diagonal entries of the symmetrized
// batch R. Eigenvalue estimates use the matrix convention (mu_j = n * R_jj
// over the full dataset) and keep the model's output order.
struct TrainReport {
  std::int64_t steps_per_epoch = 0;
  std::int64_t n_patches = 0;
  std::vector<double> loss;
  std::vector<double> lr;
  std::vector<double> tau;
  std::vector<double> constraint_dev;  // max_j |mean_b psi_bj^2 - 1|
  std::vector<std::vector<double>> r_diag;
  std::vector<double> eigenvalue_estimates;

  std::int64_t steps() const { return static_cast<std::int64_t>(loss.size()); }
};

// One log line per step (step, epoch, loss, lr, tau, constraint deviation,
// leading R_jj entries), preceded by a header that pins the eigenvalue
// convention; ends with the estimates when present.
std::string report_to_text(const TrainReport& report);

// R = Psi^T kappa Psi / B^2 with Psi in batch-major (B, K) layout, then
// symmetrized; R_hat shares the forward value but its left factor is
// gradient-stopped, so the penalty can only adjust the higher-indexed
// eigenfunction of each pair. kappa must be symmetric within 1e-8.
template <typename T>
std::pair<typename Tape<T>::Id, typename Tape<T>::Id> build_R(Tape<T>& tape,
                                                              typename Tape<T>::Id psi,
                                                              typename Tape<T>::Id kappa) {
  const Tensor<T>& pv = tape.value(psi);
  const Tensor<T>& kv = tape.value(kappa);
  if (kv.rows != kv.cols)
    throw DimensionError("build_R: kernel must be square, got " + kv.shape_str());
  if (kv.rows != pv.rows)
    throw DimensionError("build_R: kernel " + kv.shape_str() + " does not match outputs " +
                         pv.shape_str());
  double asym = 0.0;
  for (std::int64_t i = 0; i < kv.rows; ++i)
    for (std::int64_t j = i + 1; j < kv.cols; ++j)
      asym = std::max(asym, std::abs(static_cast<double>(kv.at(i, j)) -
                                     static_cast<double>(kv.at(j, i))));
  if (asym > 1e-8)
    throw DataError("build_R: kernel asymmetric by " + std::to_string(asym));
  T inv = static_cast<T>(1.0 / (static_cast<double>(pv.rows) * static_cast<double>(pv.rows)));
  auto kpsi = tape.matmul(kappa, psi);
  auto r_raw = tape.scale(tape.matmul(tape.transpose(psi), kpsi), inv);
  auto r_sym = tape.scale(tape.add(r_raw, tape.transpose(r_raw)), T(0.5));
  auto r_hat = tape.scale(tape.matmul(tape.transpose(tape.stop_gradient(psi)), kpsi), inv);
  return {r_sym, r_hat};
}

// loss = -sum_j R_jj + beta * sum_{i<j} R_hat_ij^2, the minimization form of
// the eigenfunction objective. With K = 1 the penalty has no terms.
template <typename T>
typename Tape<T>::Id build_neuralef_loss(Tape<T>& tape, typename Tape<T>::Id r_sym,
                                         typename Tape<T>::Id r_hat, T beta) {
  const Tensor<T>& rv = tape.value(r_sym);
  const Tensor<T>& hv = tape.value(r_hat);
  if (rv.rows != rv.cols)
    throw DimensionError("neuralef_loss: R must be square, got " + rv.shape_str());
  if (hv.rows != rv.rows || hv.cols != rv.cols)
    throw DimensionError("neuralef_loss: R " + rv.shape_str() + " vs R_hat " + hv.shape_str());
  std::int64_t k = rv.rows;
  Tensor<T> eye = Tensor<T>::zeros(k, k);
  Tensor<T> upper = Tensor<T>::zeros(k, k);
  for (std::int64_t i = 0; i < k; ++i) {
    eye.at(i, i) = T(1);
    for (std::int64_t j = i + 1; j < k; ++j) upper.at(i, j) = T(1);
  }
  auto trace = tape.sum_all(tape.mul(r_sym, tape.constant(eye)));
  auto masked = tape.mul(r_hat, tape.constant(upper));
  auto penalty = tape.sum_all(tape.mul(masked, masked));
  return tape.add(tape.scale(trace, T(-1)), tape.scale(penalty, beta));
}

// Value-level counterparts, built on a throwaway tape so the arithmetic is
// the exact training code path. The two returned matrices are identical;
// they only differ in what gradients would reach.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> compute_R(const Tensor<T>& psi, const Tensor<T>& kappa) {
  Tape<T> tape;
  auto [r_sym, r_hat] = build_R(tape, tape.constant(psi), tape.constant(kappa));
  Tensor<T> r = tape.value(r_sym);
  return {r, r};
}

template <typename T>
T neuralef_loss(const Tensor<T>& r, const Tensor<T>& r_hat, T beta) {
  Tape<T> tape;
  auto loss = build_neuralef_loss(tape, tape.constant(r), tape.constant(r_hat), beta);
  return tape.value(loss).at(0, 0);
}

struct TrainResult {
  EigenModel<float> model;
  TrainReport report;
};

// Full training loop: per epoch, shuffle the image order and walk it in
// batches of batch_images whole images (the last batch takes the remainder),
// so every image is visited once per epoch. Each step assembles the batch,
// evaluates the kernel, runs the training forward at the scheduled
// temperature, backpropagates the objective, applies one Adam update under a
// cosine-decayed learning rate that reaches zero on the final step, and
// re-orthonormalizes the head. Deterministic for a given config and dataset.
// A non-finite loss aborts with the step index in the message.
TrainResult train(const FeatureContainer& fc, const RunConfig& cfg, KernelSource& kernel,
                  std::ostream* live_log = nullptr);

// Kernel built from the config's graph parameters.
TrainResult train(const FeatureContainer& fc, const RunConfig& cfg,
                  std::ostream* live_log = nullptr);

// Full-dataset diagonal of R, rescaled to matrix eigenvalues (mu_j = n *
// R_jj), reported in output order without re-sorting. The evaluation outputs
// are deterministic: softmax at the schedule's final temperature when the
// run quantizes, raw logits otherwise, both batch-normalized to unit mean
// square over the whole dataset.
std::vector<double> estimate_eigenvalues(const EigenModel<float>& model,
                                         const FeatureContainer& fc, const RunConfig& cfg,
                                         KernelSource& kernel);

std::vector<double> estimate_eigenvalues(const EigenModel<float>& model,
                                         const FeatureContainer& fc, const RunConfig& cfg);

// The deterministic evaluation outputs described above, (n, K) over the full
// dataset in image order. Shared by eigenvalue estimation and clustering on
// the trained embedding.
Tensor<double> eval_outputs(const EigenModel<float>& model, const FeatureContainer& fc,
                            const RunConfig& cfg);

}  // namespace nef

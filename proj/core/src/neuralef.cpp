#include "nef/neuralef.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "nef/adam.hpp"
#include "nef/rng.hpp"

namespace nef {

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::string step_line(const TrainReport& r, std::int64_t t) {
  std::ostringstream os;
  std::size_t i = static_cast<std::size_t>(t);
  os << "step=" << t << " epoch=" << (r.steps_per_epoch > 0 ? t / r.steps_per_epoch : 0)
     << " loss=" << fmt(r.loss[i]) << " lr=" << fmt(r.lr[i]) << " tau=" << fmt(r.tau[i])
     << " msdev=" << fmt(r.constraint_dev[i]) << " Rjj=";
  const auto& diag = r.r_diag[i];
  std::size_t head = std::min<std::size_t>(diag.size(), 8);
  for (std::size_t j = 0; j < head; ++j) {
    if (j) os << ',';
    os << fmt(diag[j]);
  }
  return os.str();
}

std::string estimates_line(const std::vector<double>& mu) {
  std::ostringstream os;
  os << "estimates=";
  for (std::size_t j = 0; j < mu.size(); ++j) {
    if (j) os << ',';
    os << fmt(mu[j]);
  }
  return os.str();
}

Tensor<float> image_tokens_f32(const Tensor<double>& features, std::int64_t row0,
                               std::int64_t rows) {
  Tensor<float> out(rows, features.cols);
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < features.cols; ++j)
      out.at(i, j) = static_cast<float>(features.at(row0 + i, j));
  return out;
}

Tensor<float> to_f32(const Tensor<double>& a) {
  Tensor<float> out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = static_cast<float>(a.data[i]);
  return out;
}

}  // namespace

FixedKernelSource::FixedKernelSource(Tensor<double> full) : full_(std::move(full)) {
  if (full_.rows != full_.cols)
    throw DimensionError("fixed kernel: must be square, got " + full_.shape_str());
  full_.check_finite("fixed kernel");
  double asym = 0.0;
  for (std::int64_t i = 0; i < full_.rows; ++i)
    for (std::int64_t j = i + 1; j < full_.cols; ++j)
      asym = std::max(asym, std::abs(full_.at(i, j) - full_.at(j, i)));
  if (asym > 1e-8) throw DataError("fixed kernel: asymmetric by " + std::to_string(asym));
}

Tensor<double> FixedKernelSource::batch(const PatchSet& b) {
  Tensor<double> out(b.n, b.n);
  for (std::int64_t i = 0; i < b.n; ++i) {
    std::int64_t gi = b.global_index[static_cast<std::size_t>(i)];
    if (gi < 0 || gi >= full_.rows)
      throw DataError("fixed kernel: batch index " + std::to_string(gi) +
                      " outside the " + std::to_string(full_.rows) + "-point kernel");
    for (std::int64_t j = 0; j < b.n; ++j)
      out.at(i, j) = full_.at(gi, b.global_index[static_cast<std::size_t>(j)]);
  }
  return out;
}

std::string report_to_text(const TrainReport& r) {
  std::ostringstream os;
  os << "# training log: one line per optimizer step\n";
  os << "# eigenvalue estimates use the matrix convention: mu_j = n * R_jj, n = "
     << r.n_patches << "\n";
  for (std::int64_t t = 0; t < r.steps(); ++t) os << step_line(r, t) << "\n";
  if (!r.eigenvalue_estimates.empty()) os << estimates_line(r.eigenvalue_estimates) << "\n";
  return os.str();
}

TrainResult train(const FeatureContainer& fc, const RunConfig& cfg, KernelSource& kernel,
                  std::ostream* live_log) {
  cfg.validate();
  fc.validate();
  if (fc.n_images < 1 || fc.total_patches() < 1) throw DataError("train: empty dataset");

  std::int64_t n_images = fc.n_images;
  std::int64_t ppi = fc.patches_per_image();
  std::int64_t K = cfg.n_eigenfuncs;
  std::int64_t b_img = std::min<std::int64_t>(cfg.batch_images, n_images);
  std::int64_t steps_per_epoch = (n_images + b_img - 1) / b_img;
  std::int64_t total_steps = cfg.epochs * steps_per_epoch;
  std::int64_t horizon = std::max<std::int64_t>(total_steps - 1, 1);

  CounterRng root(cfg.seed);
  CounterRng init_rng = root.fork(0);
  CounterRng shuffle_rng = root.fork(1);
  CounterRng noise_rng = root.fork(2);

  EigenModel<float> model =
      init_model<float>(cfg.n_blocks, cfg.width_effective(), K, fc.c, init_rng);
  AdamState<float> adam = AdamState<float>::like(model.parameters());
  TemperatureSchedule sched{cfg.tau_start, cfg.tau_end, horizon};
  float beta = static_cast<float>(cfg.beta_effective());

  TrainReport report;
  report.steps_per_epoch = steps_per_epoch;
  report.n_patches = fc.total_patches();

  std::vector<std::int64_t> order(static_cast<std::size_t>(n_images));
  std::iota(order.begin(), order.end(), 0);

  std::int64_t t = 0;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::int64_t b0 = 0; b0 < n_images; b0 += b_img, ++t) {
      std::vector<std::int64_t> ids(order.begin() + b0,
                                    order.begin() + std::min(b0 + b_img, n_images));
      std::sort(ids.begin(), ids.end());
      PatchSet ps = assemble_patchset(fc, ids);
      Tensor<double> kappa = kernel.batch(ps);

      double tau = sched.at(t);
      double lr = (total_steps > 1 && t == total_steps - 1)
                      ? 0.0
                      : cfg.lr * 0.5 *
                            (1.0 + std::cos(M_PI * static_cast<double>(t) /
                                            static_cast<double>(horizon)));

      Tape<float> tape;
      StagedModel<float> sm = stage_model(tape, model, true);
      std::vector<Tape<float>::Id> tokens;
      tokens.reserve(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i)
        tokens.push_back(tape.constant(
            image_tokens_f32(ps.features, static_cast<std::int64_t>(i) * ppi, ppi)));
      std::span<const Tape<float>::Id> token_span(tokens);

      Tape<float>::Id psi;
      if (cfg.quantize) {
        Tensor<float> noise = sample_gumbel<float>(ps.n, K, noise_rng);
        psi = build_train_psi(tape, sm, token_span, static_cast<float>(tau), noise,
                              cfg.hard_gumbel);
      } else {
        psi = tape.l2_batchnorm(build_logits(tape, sm, token_span));
      }
      auto [r_sym, r_hat] = build_R(tape, psi, tape.constant(to_f32(kappa)));
      auto loss_id = build_neuralef_loss(tape, r_sym, r_hat, beta);

      double loss = static_cast<double>(tape.value(loss_id).at(0, 0));
      if (!std::isfinite(loss))
        throw NumericError("train: non-finite loss at step " + std::to_string(t));

      const Tensor<float>& rv = tape.value(r_sym);
      std::vector<double> diag(static_cast<std::size_t>(K));
      for (std::int64_t j = 0; j < K; ++j)
        diag[static_cast<std::size_t>(j)] = static_cast<double>(rv.at(j, j));
      const Tensor<float>& pv = tape.value(psi);
      double dev = 0.0;
      for (std::int64_t j = 0; j < K; ++j) {
        double ms = 0.0;
        for (std::int64_t i = 0; i < pv.rows; ++i) {
          double x = static_cast<double>(pv.at(i, j));
          ms += x * x;
        }
        dev = std::max(dev, std::abs(ms / static_cast<double>(pv.rows) - 1.0));
      }

      tape.backward(loss_id);
      std::vector<Tensor<float>> grads;
      grads.reserve(sm.all.size());
      for (auto id : sm.all) grads.push_back(tape.grad(id));
      adam_step(model.parameters(), grads, adam, lr);
      orthogonalize_head(model);

      report.loss.push_back(loss);
      report.lr.push_back(lr);
      report.tau.push_back(tau);
      report.constraint_dev.push_back(dev);
      report.r_diag.push_back(std::move(diag));
      if (live_log) *live_log << step_line(report, t) << std::endl;
    }
  }

  report.eigenvalue_estimates = estimate_eigenvalues(model, fc, cfg, kernel);
  if (live_log) *live_log << estimates_line(report.eigenvalue_estimates) << std::endl;
  return {std::move(model), std::move(report)};
}

TrainResult train(const FeatureContainer& fc, const RunConfig& cfg, std::ostream* live_log) {
  KernelConfig kc{cfg.k, cfg.k_tilde, cfg.alpha};
  GraphKernelSource src(kc);
  return train(fc, cfg, src, live_log);
}

Tensor<double> eval_outputs(const EigenModel<float>& model, const FeatureContainer& fc,
                            const RunConfig& cfg) {
  fc.validate();
  if (model.c != fc.c)
    throw DimensionError("eval: model expects " + std::to_string(model.c) +
                         " channels, dataset has " + std::to_string(fc.c));
  std::int64_t ppi = fc.patches_per_image();
  std::int64_t n = fc.total_patches();
  Tensor<float> logits(n, model.k);
  for (std::int64_t img = 0; img < fc.n_images; ++img) {
    Tensor<float> tok(ppi, fc.c);
    auto src = fc.image_features(img);
    for (std::size_t i = 0; i < src.size(); ++i) tok.data[i] = src[i];
    Tensor<float> out = forward_infer(model, tok);
    for (std::int64_t i = 0; i < ppi; ++i)
      for (std::int64_t j = 0; j < model.k; ++j) logits.at(img * ppi + i, j) = out.at(i, j);
  }
  Tape<float> tape;
  Tape<float>::Id psi;
  if (cfg.quantize) {
    psi = tape.l2_batchnorm(
        tape.softmax_rows(tape.constant(logits), static_cast<float>(cfg.tau_end)));
  } else {
    psi = tape.l2_batchnorm(tape.constant(logits));
  }
  const Tensor<float>& pv = tape.value(psi);
  Tensor<double> out(pv.rows, pv.cols);
  for (std::size_t i = 0; i < pv.data.size(); ++i)
    out.data[i] = static_cast<double>(pv.data[i]);
  return out;
}

std::vector<double> estimate_eigenvalues(const EigenModel<float>& model,
                                         const FeatureContainer& fc, const RunConfig& cfg,
                                         KernelSource& kernel) {
  Tensor<double> psi = eval_outputs(model, fc, cfg);
  PatchSet full = assemble_full_patchset(fc);
  Tensor<double> kappa = kernel.batch(full);
  auto [r, r_hat] = compute_R(psi, kappa);
  (void)r_hat;
  std::vector<double> mu(static_cast<std::size_t>(model.k));
  for (std::int64_t j = 0; j < model.k; ++j)
    mu[static_cast<std::size_t>(j)] = static_cast<double>(full.n) * r.at(j, j);
  return mu;
}

std::vector<double> estimate_eigenvalues(const EigenModel<float>& model,
                                         const FeatureContainer& fc, const RunConfig& cfg) {
  KernelConfig kc{cfg.k, cfg.k_tilde, cfg.alpha};
  GraphKernelSource src(kc);
  return estimate_eigenvalues(model, fc, cfg, src);
}

}  // namespace nef

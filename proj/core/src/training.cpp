#include "isoimm/training.hpp"

#include "isoimm/io.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace isoimm {

AdamState make_adam(double lr) {
  AdamState s;
  s.lr = lr;
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) throw ShapeError("adam_step: gradient " + std::to_string(i) + " shape mismatch");
    if (!grads[i].all_finite()) throw NumericError("adam_step: gradient " + std::to_string(i) + " is not finite");
  }
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state was built for a different parameter list");
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.m[i].matrix();
    auto v = state.v[i].matrix();
    auto g = grads[i].matrix();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    auto p = params[i]->matrix();
    p.array() -= state.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
  }
}

std::vector<Tensor*> parameter_tensors(MlpParams& p) {
  std::vector<Tensor*> out;
  for (auto& L : p.layers) {
    out.push_back(&L.weight);
    out.push_back(&L.bias);
  }
  return out;
}

std::size_t TrainConfig::effective_batch(std::size_t n) const {
  if (batch_size != 0) return batch_size;
  return n <= 2000 ? n : 256;
}

void TrainConfig::validate(std::size_t n) const {
  weights.validate();
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  for (auto h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden widths must be >= 1");
  }
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (inner_imm_iters < 1 || inner_iso_iters < 1) throw std::invalid_argument("inner iteration counts must be >= 1");
  if (!(lr_theta >= 0.0) || !(lr_omega >= 0.0)) throw std::invalid_argument("learning rates must be >= 0");
  if (sampler == SamplerKind::Ball && !(ball_radius > 0.0)) throw std::invalid_argument("ball_radius must be > 0");
  const std::size_t b = effective_batch(n);
  if (b > n) throw std::invalid_argument("batch_size exceeds dataset size");
  if (sampler == SamplerKind::Knn && k >= b) throw std::invalid_argument("k must be smaller than the batch size");
}

TrainState init_state(std::size_t ambient_dim, const TrainConfig& cfg) {
  MlpSpec enc{{ambient_dim}, cfg.activation};
  for (auto h : cfg.hidden) enc.layer_dims.push_back(h);
  enc.layer_dims.push_back(cfg.latent_dim);
  MlpSpec dec{{cfg.latent_dim}, cfg.activation};
  for (auto h : cfg.hidden) dec.layer_dims.push_back(h);
  dec.layer_dims.push_back(ambient_dim);
  if (cfg.latent_dim > ambient_dim) throw std::invalid_argument("latent_dim must not exceed the ambient dimension");

  TrainState s;
  s.encoder = init_mlp(enc, splitmix64(cfg.seed ^ 0x656e63ULL));
  s.decoder = init_mlp(dec, splitmix64(cfg.seed ^ 0x646563ULL));
  s.dual = s.decoder;
  s.adam_theta = make_adam(cfg.lr_theta);
  s.adam_omega = make_adam(cfg.lr_omega);
  return s;
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size > n) throw std::invalid_argument("batch size exceeds dataset size");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < batch_size; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
  order.resize(batch_size);
  return order;
}

StepBatch prepare_batch(const TrainState& state, const PointCloud& cloud, std::vector<std::size_t> indices,
                        const TrainConfig& cfg, Rng& sampler_rng) {
  StepBatch b;
  b.sampler = cfg.sampler;
  b.x.resize(static_cast<Eigen::Index>(indices.size()), cloud.points.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    b.x.row(static_cast<Eigen::Index>(i)) = cloud.points.row(static_cast<Eigen::Index>(indices[i]));
  }
  b.indices = std::move(indices);
  LatentBatch latents{mlp_forward(state.encoder, b.x), b.indices};
  if (cfg.sampler == SamplerKind::Knn) {
    b.neighborhoods = knn_neighborhoods(latents.codes, cfg.k);
  } else {
    for (std::size_t c = 0; c < latents.size(); ++c) {
      b.neighborhoods.push_back(ball_neighborhood(latents, c, cfg.k, cfg.ball_radius, sampler_rng));
    }
  }
  return b;
}

Matrix neighborhood_points(const NeighborhoodSample& nb, const Matrix& codes, SamplerKind sampler) {
  const auto center = static_cast<Eigen::Index>(nb.center_row);
  if (sampler == SamplerKind::Knn) {
    Matrix pts(static_cast<Eigen::Index>(nb.member_rows.size() + 1), codes.cols());
    pts.row(0) = codes.row(center);
    for (std::size_t i = 0; i < nb.member_rows.size(); ++i) {
      pts.row(static_cast<Eigen::Index>(i + 1)) = codes.row(static_cast<Eigen::Index>(nb.member_rows[i]));
    }
    return pts;
  }
  Matrix pts = nb.points.rowwise() - nb.points.row(0);
  pts.rowwise() += codes.row(center);
  return pts;
}

namespace {

struct ImmersionGraph {
  Tape tape;
  MlpNodes encoder;
  MlpNodes decoder;
  NodeId l_re = 0, l_tm = 0, l_du = 0, total = 0;
};

void build_immersion(ImmersionGraph& g, const TrainState& s, const StepBatch& b, const TrainConfig& cfg) {
  Tape& t = g.tape;
  g.encoder = place_mlp(t, s.encoder, true);
  g.decoder = place_mlp(t, s.decoder, true);
  MlpNodes dual = place_mlp(t, s.dual, false);

  NodeId x = t.constant(Tensor::from(b.x));
  NodeId z = mlp_forward_node(t, g.encoder, x);
  NodeId x_rec = mlp_forward_node(t, g.decoder, z);
  g.l_re = loss_re(t, x, x_rec);

  PairList pairs;
  NodeId decoded = x_rec;
  if (b.sampler == SamplerKind::Knn) {
    for (const auto& nb : b.neighborhoods) {
      auto row = [&](std::size_t local) { return local == 0 ? nb.center_row : nb.member_rows[local - 1]; };
      for (auto [p, q] : nb.pairs) pairs.emplace_back(row(p), row(q));
    }
  } else {
    std::vector<std::size_t> centers;
    Matrix offsets;
    std::size_t total = 0;
    for (const auto& nb : b.neighborhoods) total += static_cast<std::size_t>(nb.points.rows());
    offsets.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(s.encoder.spec.output_dim()));
    std::size_t base = 0;
    for (const auto& nb : b.neighborhoods) {
      const auto n = static_cast<std::size_t>(nb.points.rows());
      offsets.middleRows(static_cast<Eigen::Index>(base), static_cast<Eigen::Index>(n)) = nb.points.rowwise() - nb.points.row(0);
      for (std::size_t i = 0; i < n; ++i) centers.push_back(nb.center_row);
      for (auto [p, q] : nb.pairs) pairs.emplace_back(base + p, base + q);
      base += n;
    }
    NodeId pts = t.add(t.gather_rows(z, std::move(centers)), t.constant(Tensor::from(offsets)));
    decoded = mlp_forward_node(t, g.decoder, pts);
  }
  g.l_tm = loss_tm(t, decoded, pairs);
  g.l_du = loss_dual(t, x_rec, mlp_forward_node(t, dual, z));
  g.total = loss_immersion(t, g.l_re, g.l_tm, g.l_du, cfg.weights);
}

struct IsometryGraph {
  Tape tape;
  MlpNodes dual;
  NodeId l_is = 0, l_du = 0, total = 0;
};

void build_isometry(IsometryGraph& g, const TrainState& s, const StepBatch& b, const TrainConfig& cfg) {
  // The decoder side is frozen: latents, decoded points and distances are constants.
  const Matrix codes = mlp_forward(s.encoder, b.x);
  const Matrix decoded = mlp_forward(s.decoder, codes);

  std::vector<Matrix> points, dec_points;
  points.reserve(b.neighborhoods.size());
  dec_points.reserve(b.neighborhoods.size());
  Matrix centers(static_cast<Eigen::Index>(b.neighborhoods.size()), codes.cols());
  for (std::size_t i = 0; i < b.neighborhoods.size(); ++i) {
    const auto& nb = b.neighborhoods[i];
    points.push_back(neighborhood_points(nb, codes, b.sampler));
    centers.row(static_cast<Eigen::Index>(i)) = codes.row(static_cast<Eigen::Index>(nb.center_row));
    if (b.sampler == SamplerKind::Knn) {
      Matrix d(points.back().rows(), decoded.cols());
      d.row(0) = decoded.row(static_cast<Eigen::Index>(nb.center_row));
      for (std::size_t j = 0; j < nb.member_rows.size(); ++j) {
        d.row(static_cast<Eigen::Index>(j + 1)) = decoded.row(static_cast<Eigen::Index>(nb.member_rows[j]));
      }
      dec_points.push_back(std::move(d));
    } else {
      dec_points.push_back(mlp_forward(s.decoder, points.back()));
    }
  }
  IsometryPairs pairs = isometry_pairs(b.neighborhoods, points, dec_points);

  Tape& t = g.tape;
  g.dual = place_mlp(t, s.dual, true);
  NodeId zc = t.constant(Tensor::from(centers));
  auto columns = mlp_jacobian_columns_node(t, g.dual, zc, b.neighborhoods.size());
  g.l_is = loss_is(t, columns, pairs);
  NodeId z = t.constant(Tensor::from(codes));
  g.l_du = loss_dual(t, t.constant(Tensor::from(decoded)), mlp_forward_node(t, g.dual, z));
  g.total = loss_isometry(t, g.l_is, g.l_du, cfg.weights);
}

void check_loss(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainingError(std::string(what) + " is not finite");
  if (v > kDivergenceThreshold) {
    throw TrainingError(std::string(what) + " = " + format_double(v) + " exceeds the divergence threshold");
  }
}

}  // namespace

namespace {

// Rebind the current parameter values to their input nodes.
void bind_params(Bindings& out, const MlpNodes& net, const MlpParams& p) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    out[net.weights[l]] = p.layers[l].weight;
    out[net.biases[l]] = p.layers[l].bias;
  }
}

}  // namespace

double e_step(TrainState& state, const StepBatch& batch, const TrainConfig& cfg) {
  // The graph depends on the batch only; parameters are rebound every step.
  ImmersionGraph g;
  build_immersion(g, state, batch, cfg);
  double last = 0.0;
  for (std::size_t it = 0; it < cfg.inner_imm_iters; ++it) {
    Bindings values;
    bind_params(values, g.encoder, state.encoder);
    bind_params(values, g.decoder, state.decoder);
    g.tape.forward(values);
    last = g.tape.value(g.total).item();
    check_loss(last, "immersion loss");
    Gradients grads = g.tape.backward(g.total);
    std::vector<Tensor> flat = collect_gradients(g.encoder, grads);
    for (auto& gt : collect_gradients(g.decoder, grads)) flat.push_back(std::move(gt));
    std::vector<Tensor*> params = parameter_tensors(state.encoder);
    for (auto* p : parameter_tensors(state.decoder)) params.push_back(p);
    adam_step(params, flat, state.adam_theta);
  }
  return last;
}

double m_step(TrainState& state, const StepBatch& batch, const TrainConfig& cfg) {
  IsometryGraph g;
  build_isometry(g, state, batch, cfg);
  double last = 0.0;
  for (std::size_t it = 0; it < cfg.inner_iso_iters; ++it) {
    Bindings values;
    bind_params(values, g.dual, state.dual);
    g.tape.forward(values);
    last = g.tape.value(g.total).item();
    check_loss(last, "isometry loss");
    Gradients grads = g.tape.backward(g.total);
    std::vector<Tensor> flat = collect_gradients(g.dual, grads);
    adam_step(parameter_tensors(state.dual), flat, state.adam_omega);
  }
  return last;
}

LossReport evaluate_losses(const TrainState& state, const StepBatch& batch, const TrainConfig& cfg) {
  ImmersionGraph imm;
  build_immersion(imm, state, batch, cfg);
  imm.tape.forward();
  IsometryGraph iso;
  build_isometry(iso, state, batch, cfg);
  iso.tape.forward();

  LossReport r;
  r.l_re = imm.tape.value(imm.l_re).item();
  r.l_tm = imm.tape.value(imm.l_tm).item();
  r.l_du = imm.tape.value(imm.l_du).item();
  r.l_is = iso.tape.value(iso.l_is).item();
  const auto& w = cfg.weights;
  r.l_immersion = w.alpha * r.l_re + w.beta * r.l_tm + w.gamma * r.l_du;
  r.l_isometry = w.epsilon * r.l_is + w.gamma * r.l_du;
  return r;
}

TrainResult finalize(TrainState state, const PointCloud& cloud) {
  TrainResult r;
  r.latents.codes = mlp_forward(state.encoder, cloud.points);
  r.latents.source.resize(cloud.size());
  std::iota(r.latents.source.begin(), r.latents.source.end(), 0);
  r.metric_field.reserve(cloud.size());
  for (Eigen::Index i = 0; i < r.latents.codes.rows(); ++i) {
    r.metric_field.push_back(pullback_metric(state.dual, r.latents.codes.row(i).transpose()));
  }
  r.state = std::move(state);
  return r;
}

TrainResult train_loop(const PointCloud& cloud, const TrainConfig& cfg, const TrainObserver& observer) {
  cloud.validate();
  cfg.validate(cloud.size());
  TrainState state = init_state(cloud.dim(), cfg);
  Rng batch_rng(cfg.seed, "batch");
  Rng sampler_rng(cfg.seed, "sampler");
  const std::size_t batch_size = cfg.effective_batch(cloud.size());
  auto notify = [&](StepPhase phase) {
    if (observer) observer(phase, state);
  };

  for (std::size_t iter = 0; iter < cfg.outer_iters; ++iter) {
    TrainState last_good = state;
    try {
      StepBatch batch = prepare_batch(state, cloud, sample_batch(cloud.size(), batch_size, batch_rng), cfg, sampler_rng);
      notify(StepPhase::BeforeE);
      e_step(state, batch, cfg);
      notify(StepPhase::AfterE);
      notify(StepPhase::BeforeM);
      m_step(state, batch, cfg);
      notify(StepPhase::AfterM);
      LossReport report = evaluate_losses(state, batch, cfg);
      check_loss(report.l_immersion, "immersion loss");
      check_loss(report.l_isometry, "isometry loss");
      state.history.push_back(report);
      state.outer_iter += 1;
    } catch (const TrainingError& e) {
      throw TrainingDiverged("outer iteration " + std::to_string(iter) + ": " + e.what(), std::move(last_good));
    } catch (const NumericError& e) {
      throw TrainingDiverged("outer iteration " + std::to_string(iter) + ": " + e.what(), std::move(last_good));
    }
  }
  return finalize(std::move(state), cloud);
}

std::string training_log_csv(const std::vector<LossReport>& history) {
  std::ostringstream os;
  os << "iteration,l_re,l_tm,l_is,l_du,l_immersion,l_isometry\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    os << i << ',' << format_double(r.l_re) << ',' << format_double(r.l_tm) << ',' << format_double(r.l_is) << ','
       << format_double(r.l_du) << ',' << format_double(r.l_immersion) << ',' << format_double(r.l_isometry) << '\n';
  }
  return os.str();
}

}  // namespace isoimm

#include "hamlearn/model.hpp"

#include <algorithm>
#include <numeric>

#include "hamlearn/error.hpp"

namespace hamlearn {

void AsrnnModel::validate() const {
  k_spec.validate();
  v_spec.validate();
  k_params.check_shapes(k_spec);
  v_params.check_shapes(v_spec);
  if (v_spec.input_dim() < k_spec.input_dim())
    throw ShapeError("potential network input (q plus parameters)", k_spec.input_dim(), v_spec.input_dim());
  if (!(dt > 0.0)) throw ContractError("model dt must be positive");
}

Vector AsrnnModel::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  const Vector k = k_params.flatten();
  flat.head(k.size()) = k;
  flat.tail(flat.size() - k.size()) = v_params.flatten();
  return flat;
}

void AsrnnModel::unflatten(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count()))
    throw ShapeError("model parameter vector", static_cast<std::ptrdiff_t>(parameter_count()), flat.size());
  const auto nk = static_cast<Eigen::Index>(k_params.size());
  k_params.unflatten(flat.head(nk));
  v_params.unflatten(flat.tail(flat.size() - nk));
}

AsrnnModel AsrnnModel::zeros(MlpSpec k_spec, MlpSpec v_spec, double dt) {
  AsrnnModel m;
  m.k_params = MlpParams::zeros(k_spec);
  m.v_params = MlpParams::zeros(v_spec);
  m.k_spec = std::move(k_spec);
  m.v_spec = std::move(v_spec);
  m.dt = dt;
  m.validate();
  return m;
}

AsrnnModel AsrnnModel::init(MlpSpec k_spec, MlpSpec v_spec, double dt, std::uint64_t seed) {
  AsrnnModel m;
  m.k_params = init_gaussian(k_spec, derive_seed(seed, {1}));
  m.v_params = init_gaussian(v_spec, derive_seed(seed, {2}));
  m.k_spec = std::move(k_spec);
  m.v_spec = std::move(v_spec);
  m.dt = dt;
  m.validate();
  return m;
}

Vector LossGradient::flatten() const {
  const Vector k = k_grad.flatten();
  const Vector v = v_grad.flatten();
  Vector flat(k.size() + v.size());
  flat << k, v;
  return flat;
}

namespace {

Matrix stack_lambda(const Matrix& q, const Vector& lambda) {
  Matrix x(q.rows() + lambda.size(), q.cols());
  x.topRows(q.rows()) = q;
  x.bottomRows(lambda.size()) = lambda.replicate(1, q.cols());
  return x;
}

void check_lambda(const AsrnnModel& m, const Vector& lambda) {
  if (lambda.size() != m.lambda_dim()) throw ShapeError("model parameter channels", m.lambda_dim(), lambda.size());
}

}  // namespace

Matrix ModelForces::dVdq(const Matrix& q, const Vector& lambda) const {
  if (q.rows() != m_.dim()) throw ShapeError("model dVdq q", m_.dim(), q.rows());
  check_lambda(m_, lambda);
  return mlp_input_gradient_batch(m_.v_params, stack_lambda(q, lambda)).topRows(m_.dim());
}

Matrix ModelForces::dKdp(const Matrix& p) const {
  if (p.rows() != m_.dim()) throw ShapeError("model dKdp p", m_.dim(), p.rows());
  return mlp_input_gradient_batch(m_.k_params, p);
}

PredictedTrajectory predict(const AsrnnModel& m, const PhaseState& z0, const Vector& lambda, std::size_t n) {
  const ModelForces forces(m);
  return rollout(forces, z0, lambda, m.dt, n);
}

std::vector<PhaseBatch> predict_batch(const AsrnnModel& m, const PhaseBatch& z0, const Vector& lambda,
                                      std::size_t n) {
  const ModelForces forces(m);
  return rollout_batch(forces, z0, lambda, m.dt, n);
}

double learned_hamiltonian(const AsrnnModel& m, const PhaseState& s, const Vector& lambda) {
  return learned_hamiltonian_batch(m, PhaseBatch{s.q, s.p}, lambda)(0);
}

Eigen::RowVectorXd learned_hamiltonian_batch(const AsrnnModel& m, const PhaseBatch& s, const Vector& lambda) {
  if (s.q.rows() != m.dim()) throw ShapeError("learned_hamiltonian q", m.dim(), s.q.rows());
  if (s.p.rows() != m.dim()) throw ShapeError("learned_hamiltonian p", m.dim(), s.p.rows());
  check_lambda(m, lambda);
  return mlp_eval_batch(m.k_params, s.p) + mlp_eval_batch(m.v_params, stack_lambda(s.q, lambda));
}

std::vector<double> learned_potential_curve(const AsrnnModel& m, const std::vector<Vector>& q_grid,
                                            const Vector& lambda) {
  check_lambda(m, lambda);
  Matrix q(m.dim(), static_cast<Eigen::Index>(q_grid.size()));
  for (std::size_t i = 0; i < q_grid.size(); ++i) {
    if (q_grid[i].size() != m.dim()) throw ShapeError("potential grid point", m.dim(), q_grid[i].size());
    q.col(static_cast<Eigen::Index>(i)) = q_grid[i];
  }
  if (q_grid.empty()) return {};
  const Eigen::RowVectorXd v = mlp_eval_batch(m.v_params, stack_lambda(q, lambda));
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> learned_kinetic_curve(const AsrnnModel& m, const std::vector<Vector>& p_grid) {
  if (p_grid.empty()) return {};
  Matrix p(m.dim(), static_cast<Eigen::Index>(p_grid.size()));
  for (std::size_t i = 0; i < p_grid.size(); ++i) {
    if (p_grid[i].size() != m.dim()) throw ShapeError("kinetic grid point", m.dim(), p_grid[i].size());
    p.col(static_cast<Eigen::Index>(i)) = p_grid[i];
  }
  const Eigen::RowVectorXd k = mlp_eval_batch(m.k_params, p);
  return std::vector<double>(k.data(), k.data() + k.size());
}

namespace {

// Samples of one chunk packed column-wise, ordered by decreasing k so that
// the samples still being integrated at any step form a column prefix.
struct PackedChunk {
  Matrix q0, p0, q_obs, p_obs, lambda;
  std::vector<int> k;  // decreasing

  // Number of samples with k > step.
  Eigen::Index active_after(int step) const {
    return static_cast<Eigen::Index>(
        std::count_if(k.begin(), k.end(), [step](int kk) { return kk > step; }));
  }
};

std::vector<std::size_t> order_by_k(const std::vector<SparseSample>& batch) {
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return batch[a].k > batch[b].k; });
  return order;
}

PackedChunk pack(const AsrnnModel& m, const std::vector<SparseSample>& batch, const std::vector<std::size_t>& order,
                 std::size_t begin, std::size_t end) {
  const int d = m.dim();
  const int dl = m.lambda_dim();
  const auto n = static_cast<Eigen::Index>(end - begin);
  PackedChunk c{Matrix(d, n), Matrix(d, n), Matrix(d, n), Matrix(d, n), Matrix(dl, n), {}};
  for (std::size_t i = begin; i < end; ++i) {
    const auto& s = batch[order[i]];
    const auto col = static_cast<Eigen::Index>(i - begin);
    if (s.z0.q.size() != d || s.z0.p.size() != d) throw ShapeError("sample z0", d, s.z0.q.size());
    if (s.z_obs.q.size() != d || s.z_obs.p.size() != d) throw ShapeError("sample z_obs", d, s.z_obs.q.size());
    if (s.lambda.size() != dl) throw ShapeError("sample lambda", dl, s.lambda.size());
    if (s.k < 1) throw ContractError("sample step offset k must be >= 1");
    c.q0.col(col) = s.z0.q;
    c.p0.col(col) = s.z0.p;
    c.q_obs.col(col) = s.z_obs.q;
    c.p_obs.col(col) = s.z_obs.p;
    c.lambda.col(col) = s.lambda;
    c.k.push_back(s.k);
  }
  return c;
}

double residual_term(const Matrix& dq, const Matrix& dp, bool squared) {
  if (squared) return dq.squaredNorm() + dp.squaredNorm();
  return dq.colwise().norm().sum() + dp.colwise().norm().sum();
}

// Sum (not mean) of the per-sample mismatch over one chunk, plain evaluation.
double chunk_loss_sum(const AsrnnModel& m, const PackedChunk& c, bool squared) {
  const int d = m.dim();
  Matrix q = c.q0, p = c.p0;
  Eigen::Index width = q.cols();
  Matrix force = mlp_input_gradient_batch(m.v_params, (Matrix(d + m.lambda_dim(), width) << q, c.lambda).finished())
                     .topRows(d);
  double total = 0.0;
  const int k_max = c.k.empty() ? 0 : c.k.front();
  for (int step = 0; step < k_max; ++step) {
    const Eigen::Index active = c.active_after(step);
    if (active < width) {
      q.conservativeResize(Eigen::NoChange, active);
      p.conservativeResize(Eigen::NoChange, active);
      force.conservativeResize(Eigen::NoChange, active);
      width = active;
    }
    p -= (0.5 * m.dt) * force;
    q += m.dt * mlp_input_gradient_batch(m.k_params, p);
    Matrix x(d + m.lambda_dim(), width);
    x << q, c.lambda.leftCols(width);
    force = mlp_input_gradient_batch(m.v_params, x).topRows(d);
    p -= (0.5 * m.dt) * force;
    if (!q.allFinite() || !p.allFinite()) throw BlowupError(static_cast<std::size_t>(step));

    const Eigen::Index done_from = c.active_after(step + 1);
    if (done_from < width) {
      const Eigen::Index cnt = width - done_from;
      total += residual_term(q.middleCols(done_from, cnt) - c.q_obs.middleCols(done_from, cnt),
                             p.middleCols(done_from, cnt) - c.p_obs.middleCols(done_from, cnt), squared);
    }
  }
  return total;
}

struct TapeNets {
  MlpVars k;
  MlpVars v;
};

ad::Var tape_dVdq(ad::Tape& tape, const TapeNets& nets, ad::Var q, ad::Var lambda, int d) {
  return tape.rows(mlp_input_gradient(tape, nets.v, tape.vstack(q, lambda)), 0, d);
}

ad::Var tape_dKdp(ad::Tape& tape, const TapeNets& nets, ad::Var p) { return mlp_input_gradient(tape, nets.k, p); }

// Records the chunk rollout on `tape` and returns the summed mismatch node.
ad::Var record_chunk_loss(ad::Tape& tape, const TapeNets& nets, const AsrnnModel& m, const PackedChunk& c,
                          bool squared) {
  const int d = m.dim();
  ad::Var q = tape.constant(c.q0);
  ad::Var p = tape.constant(c.p0);
  ad::Var lam_full = tape.constant(c.lambda);
  ad::Var lam = lam_full;
  Eigen::Index width = c.q0.cols();
  ad::Var force = tape_dVdq(tape, nets, q, lam, d);
  ad::Var total = tape.constant(Matrix::Zero(1, 1));
  const int k_max = c.k.empty() ? 0 : c.k.front();
  for (int step = 0; step < k_max; ++step) {
    const Eigen::Index active = c.active_after(step);
    if (active < width) {
      q = tape.cols(q, 0, active);
      p = tape.cols(p, 0, active);
      force = tape.cols(force, 0, active);
      lam = tape.cols(lam_full, 0, active);
      width = active;
    }
    p = tape.sub(p, tape.scale(force, 0.5 * m.dt));
    q = tape.add(q, tape.scale(tape_dKdp(tape, nets, p), m.dt));
    force = tape_dVdq(tape, nets, q, lam, d);
    p = tape.sub(p, tape.scale(force, 0.5 * m.dt));
    if (!tape.value(q).allFinite() || !tape.value(p).allFinite()) throw BlowupError(static_cast<std::size_t>(step));

    const Eigen::Index done_from = c.active_after(step + 1);
    if (done_from < width) {
      const Eigen::Index cnt = width - done_from;
      ad::Var dq = tape.sub(tape.cols(q, done_from, cnt), tape.constant(c.q_obs.middleCols(done_from, cnt)));
      ad::Var dp = tape.sub(tape.cols(p, done_from, cnt), tape.constant(c.p_obs.middleCols(done_from, cnt)));
      ad::Var term = squared ? tape.add(tape.squared_norm(dq), tape.squared_norm(dp))
                             : tape.add(tape.column_norm_sum(dq), tape.column_norm_sum(dp));
      total = tape.add(total, term);
    }
  }
  return total;
}

void accumulate(MlpParams& into, const MlpParams& g) {
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += g.weights[l];
    into.biases[l] += g.biases[l];
  }
}

void scale(MlpParams& p, double s) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    p.weights[l] *= s;
    p.biases[l] *= s;
  }
}

void check_batch(const AsrnnModel& m, const std::vector<SparseSample>& batch, const LossOptions& opt) {
  m.validate();
  if (batch.empty()) throw ContractError("loss needs a non-empty batch");
  if (opt.chunk == 0) throw ContractError("chunk size must be positive");
}

}  // namespace

double asrnn_loss(const AsrnnModel& m, const std::vector<SparseSample>& batch, const LossOptions& opt) {
  check_batch(m, batch, opt);
  const auto order = order_by_k(batch);
  double total = 0.0;
  for (std::size_t begin = 0; begin < batch.size(); begin += opt.chunk) {
    const std::size_t end = std::min(batch.size(), begin + opt.chunk);
    total += chunk_loss_sum(m, pack(m, batch, order, begin, end), opt.squared);
  }
  return total / static_cast<double>(batch.size());
}

LossGradient asrnn_loss_gradient(const AsrnnModel& m, const std::vector<SparseSample>& batch,
                                 const LossOptions& opt) {
  check_batch(m, batch, opt);
  const auto order = order_by_k(batch);
  LossGradient out{0.0, MlpParams::zeros(m.k_spec), MlpParams::zeros(m.v_spec)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t begin = 0; begin < batch.size(); begin += opt.chunk) {
    const std::size_t end = std::min(batch.size(), begin + opt.chunk);
    const PackedChunk chunk = pack(m, batch, order, begin, end);
    ad::Tape tape;
    const TapeNets nets{register_params(tape, m.k_params), register_params(tape, m.v_params)};
    const ad::Var total = record_chunk_loss(tape, nets, m, chunk, opt.squared);
    out.loss += tape.value(total)(0, 0);
    tape.backward(total);
    accumulate(out.k_grad, collect_grad(tape, nets.k, out.k_grad));
    accumulate(out.v_grad, collect_grad(tape, nets.v, out.v_grad));
  }
  out.loss *= inv_n;
  scale(out.k_grad, inv_n);
  scale(out.v_grad, inv_n);
  return out;
}

LossGradient rollout_functional_gradient(const AsrnnModel& m, const PhaseState& z0, const Vector& lambda,
                                         std::size_t n, const Vector& weights) {
  m.validate();
  check_lambda(m, lambda);
  const int d = m.dim();
  if (weights.size() != 2 * d) throw ShapeError("functional weights", 2 * d, weights.size());
  ad::Tape tape;
  const TapeNets nets{register_params(tape, m.k_params), register_params(tape, m.v_params)};
  ad::Var q = tape.constant(z0.q);
  ad::Var p = tape.constant(z0.p);
  ad::Var lam = tape.constant(lambda);
  ad::Var force = tape_dVdq(tape, nets, q, lam, d);
  for (std::size_t step = 0; step < n; ++step) {
    p = tape.sub(p, tape.scale(force, 0.5 * m.dt));
    q = tape.add(q, tape.scale(tape_dKdp(tape, nets, p), m.dt));
    force = tape_dVdq(tape, nets, q, lam, d);
    p = tape.sub(p, tape.scale(force, 0.5 * m.dt));
  }
  ad::Var out = tape.add(tape.sum(tape.mul(tape.constant(weights.head(d)), q)),
                         tape.sum(tape.mul(tape.constant(weights.tail(d)), p)));
  tape.backward(out);
  LossGradient g{tape.value(out)(0, 0), MlpParams::zeros(m.k_spec), MlpParams::zeros(m.v_spec)};
  g.k_grad = collect_grad(tape, nets.k, g.k_grad);
  g.v_grad = collect_grad(tape, nets.v, g.v_grad);
  return g;
}

namespace {

struct PackedPairs {
  Matrix q, p, lambda, dq, dp;  // dq, dp are finite-difference rates
};

PackedPairs pack_pairs(const AsrnnModel& m, const std::vector<FdPair>& pairs, double delta_s) {
  if (!(delta_s > 0.0)) throw ContractError("finite-difference interval must be positive");
  if (pairs.empty()) throw ContractError("AHNN loss needs at least one pair");
  const int d = m.dim();
  const auto n = static_cast<Eigen::Index>(pairs.size());
  PackedPairs pk{Matrix(d, n), Matrix(d, n), Matrix(m.lambda_dim(), n), Matrix(d, n), Matrix(d, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& pr = pairs[static_cast<std::size_t>(i)];
    if (pr.z_t.q.size() != d || pr.z_next.q.size() != d) throw ShapeError("pair state", d, pr.z_t.q.size());
    check_lambda(m, pr.lambda);
    pk.q.col(i) = pr.z_t.q;
    pk.p.col(i) = pr.z_t.p;
    pk.lambda.col(i) = pr.lambda;
    pk.dq.col(i) = (pr.z_next.q - pr.z_t.q) / delta_s;
    pk.dp.col(i) = (pr.z_next.p - pr.z_t.p) / delta_s;
  }
  return pk;
}

}  // namespace

double ahnn_fd_loss(const AsrnnModel& m, const std::vector<FdPair>& pairs, double delta_s) {
  m.validate();
  const PackedPairs pk = pack_pairs(m, pairs, delta_s);
  const int d = m.dim();
  Matrix x(d + m.lambda_dim(), pk.q.cols());
  x << pk.q, pk.lambda;
  const Matrix gv = mlp_input_gradient_batch(m.v_params, x).topRows(d);
  const Matrix gk = mlp_input_gradient_batch(m.k_params, pk.p);
  return ((gk - pk.dq).squaredNorm() + (gv + pk.dp).squaredNorm()) / static_cast<double>(pairs.size());
}

LossGradient ahnn_fd_loss_gradient(const AsrnnModel& m, const std::vector<FdPair>& pairs, double delta_s) {
  m.validate();
  const PackedPairs pk = pack_pairs(m, pairs, delta_s);
  const int d = m.dim();
  ad::Tape tape;
  const TapeNets nets{register_params(tape, m.k_params), register_params(tape, m.v_params)};
  ad::Var gv = tape_dVdq(tape, nets, tape.constant(pk.q), tape.constant(pk.lambda), d);
  ad::Var gk = tape_dKdp(tape, nets, tape.constant(pk.p));
  ad::Var total = tape.add(tape.squared_norm(tape.sub(gk, tape.constant(pk.dq))),
                           tape.squared_norm(tape.add(gv, tape.constant(pk.dp))));
  ad::Var loss = tape.scale(total, 1.0 / static_cast<double>(pairs.size()));
  tape.backward(loss);
  LossGradient g{tape.value(loss)(0, 0), MlpParams::zeros(m.k_spec), MlpParams::zeros(m.v_spec)};
  g.k_grad = collect_grad(tape, nets.k, g.k_grad);
  g.v_grad = collect_grad(tape, nets.v, g.v_grad);
  return g;
}

nlohmann::json mlp_to_json(const MlpSpec& spec, const MlpParams& params, std::uint64_t seed) {
  params.check_shapes(spec);
  nlohmann::json j;
  j["layer_sizes"] = spec.layer_sizes;
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const Matrix& w = params.weights[l];
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) row_major.push_back(w(r, c));
    j["weights"].push_back(row_major);
    j["biases"].push_back(std::vector<double>(params.biases[l].data(), params.biases[l].data() + params.biases[l].size()));
  }
  j["seed"] = seed;
  return j;
}

std::pair<MlpSpec, MlpParams> mlp_from_json(const nlohmann::json& j) {
  try {
    MlpSpec spec{j.at("layer_sizes").get<std::vector<int>>()};
    MlpParams params = MlpParams::zeros(spec);
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != spec.num_layers() || bs.size() != spec.num_layers())
      throw IoError("checkpoint layer count does not match layer_sizes");
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
      const auto w = ws[l].get<std::vector<double>>();
      const auto b = bs[l].get<std::vector<double>>();
      Matrix& W = params.weights[l];
      if (static_cast<Eigen::Index>(w.size()) != W.size() || static_cast<Eigen::Index>(b.size()) != params.biases[l].size())
        throw IoError("checkpoint layer " + std::to_string(l) + " has wrong size");
      std::size_t at = 0;
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[at++];
      for (std::size_t i = 0; i < b.size(); ++i) params.biases[l](static_cast<Eigen::Index>(i)) = b[i];
    }
    return {spec, params};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed network checkpoint: ") + e.what());
  }
}

nlohmann::json model_to_json(const AsrnnModel& m, std::uint64_t seed, const nlohmann::json& metadata) {
  nlohmann::json j;
  j["format"] = "hamlearn.asrnn/1";
  j["dt"] = m.dt;
  j["kinetic"] = mlp_to_json(m.k_spec, m.k_params, derive_seed(seed, {1}));
  j["potential"] = mlp_to_json(m.v_spec, m.v_params, derive_seed(seed, {2}));
  j["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  j["metadata"]["seed"] = seed;
  return j;
}

AsrnnModel model_from_json(const nlohmann::json& j) {
  try {
    AsrnnModel m;
    auto [ks, kp] = mlp_from_json(j.at("kinetic"));
    auto [vs, vp] = mlp_from_json(j.at("potential"));
    m.k_spec = std::move(ks);
    m.k_params = std::move(kp);
    m.v_spec = std::move(vs);
    m.v_params = std::move(vp);
    m.dt = j.at("dt").get<double>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed model checkpoint: ") + e.what());
  }
}

}  // namespace hamlearn

#include "fricid/identifier.hpp"

#include <chrono>
#include <cmath>
#include <optional>

#include "fricid/errors.hpp"
#include "fricid/rng.hpp"
#include "fricid/so3.hpp"

namespace fricid {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Everything about one buffer pair that does not depend on mu: the contact
// geometry, the Delassus system and the weighted measurement of the next
// state. Only the cone (mu) changes across Gauss-Newton candidates.
struct PairContext {
  GeneralizedState x0;
  ModelEval eval;
  ContactProblem problem;
  Eigen::VectorXd imp_noncontact;  // ((-h + B tau + f_ext) dt)
  double dt = 0.0;
  Eigen::Matrix3d R0;
  // measured next state
  Eigen::Vector3d p1, pdot1, omega1;
  Eigen::Matrix3d R1;
  Eigen::VectorXd qj1, qdj1;
  Eigen::VectorXd w_sqrt;                // per-residual-row weights
  std::vector<std::uint8_t> excluded;    // rejected, aligned to problem order
};

int residual_rows(const RobotModel& model) {
  return 12 + 2 * model.n_joints();
}

std::vector<PairContext> build_contexts(const std::vector<BufferEntry>& buffer,
                                        const RobotModel& model,
                                        const IdentifierConfig& cfg,
                                        int* out_skipped) {
  std::vector<PairContext> ctxs;
  int skipped = 0;
  const int nj = model.n_joints();
  for (std::size_t i = 0; i + 1 < buffer.size(); ++i) {
    const BufferEntry& e0 = buffer[i];
    const BufferEntry& e1 = buffer[i + 1];
    const double dt = e1.t - e0.t;
    if (!(dt > 0.0) || std::abs(dt / cfg.dt_buffer - 1.0) > 0.5) {
      ++skipped;
      continue;
    }
    PairContext c;
    c.dt = dt;
    c.x0 = e0.to_state(model);
    c.R0 = c.x0.base_orientation().toRotationMatrix();
    c.eval = evaluate(model, c.x0, cfg.contact_activation, &e0.contact);
    const Eigen::VectorXd f_gen = e0.generalized_external_force(model);
    c.problem = assemble_problem(c.eval, c.x0, e0.tau, dt, 0.0, f_gen);

    Eigen::VectorXd force = -c.eval.h;
    if (e0.tau.size() > 0) force += c.eval.B * e0.tau;
    force += f_gen;
    c.imp_noncontact = force * dt;

    c.p1 = e1.p;
    c.R1 = e1.R;
    c.pdot1 = e1.p_dot;
    c.omega1 = e1.omega;
    c.qj1 = e1.q_jnt;
    c.qdj1 = e1.qdot_jnt;

    bool slipping = false;
    for (std::size_t k = 0; k < e0.foot_vel.size(); ++k)
      if (e0.contact[k] &&
          e0.foot_vel[k].head<2>().norm() > cfg.weights.slip_speed_threshold)
        slipping = true;
    const double wj = cfg.weights.sigma_q_jnt *
                      (slipping ? cfg.weights.sigma_slip : 1.0);
    const double wjd = cfg.weights.sigma_qdot_jnt *
                       (slipping ? cfg.weights.sigma_slip : 1.0);
    Eigen::VectorXd w(residual_rows(model));
    w.segment(0, 3).setConstant(cfg.weights.sigma_q_base);
    w.segment(3, 3).setConstant(cfg.weights.sigma_q_base);
    w.segment(6, nj).setConstant(wj);
    w.segment(6 + nj, 3).setConstant(cfg.weights.sigma_qdot_base);
    w.segment(9 + nj, 3).setConstant(cfg.weights.sigma_qdot_base);
    w.segment(12 + nj, nj).setConstant(wjd);
    c.w_sqrt = w.cwiseSqrt();

    c.excluded.resize(c.eval.contacts.size(), 0);
    if (!e0.rejected.empty())
      for (std::size_t a = 0; a < c.eval.contacts.size(); ++a)
        c.excluded[a] = e0.rejected[c.eval.contacts[a].point_index];

    ctxs.push_back(std::move(c));
  }
  if (out_skipped) *out_skipped = skipped;
  return ctxs;
}

struct PairForward {
  bool ok = false;
  Eigen::VectorXd upsilon_next;
  GeneralizedState x_next;
  ContactSolution solution;
};

PairForward forward(const PairContext& c, double mu) {
  PairForward f;
  Eigen::VectorXd impulse = c.imp_noncontact;
  if (c.problem.n_contacts > 0) {
    ContactProblem prob = c.problem;
    prob.mu = mu;
    try {
      f.solution = solve_contacts(prob);
    } catch (const SolverError&) {
      return f;
    }
    for (std::size_t k = 0; k < c.eval.contacts.size(); ++k)
      impulse += c.eval.contacts[k].J.transpose() *
                 f.solution.lambda.segment<3>(3 * static_cast<int>(k));
  }
  f.upsilon_next = c.x0.upsilon + c.eval.M_inv * impulse;
  f.x_next = integrate(c.x0, f.upsilon_next, c.dt);
  f.ok = true;
  return f;
}

// Weighted residual of one pair; optionally also the mu-derivative rows for
// an analytic gradient method.
void pair_rows(const PairContext& c, const RobotModel& model,
               const IdentifierConfig& cfg, const PairForward& f,
               Eigen::Ref<Eigen::VectorXd> r,
               std::optional<GradientMethod> grad,
               Eigen::Ref<Eigen::VectorXd> J) {
  const int nj = model.n_joints();
  const int nv = model.nv();

  const Eigen::Matrix3d R_pred =
      f.x_next.base_orientation().toRotationMatrix();
  const Eigen::Vector3d r_rot = log_so3(R_pred.transpose() * c.R1);

  Eigen::VectorXd raw(residual_rows(model));
  raw.segment(0, 3) = f.x_next.base_position() - c.p1;
  raw.segment(3, 3) = r_rot;
  raw.segment(6, nj) = f.x_next.joint_angles() - c.qj1;
  raw.segment(6 + nj, 3) = f.upsilon_next.head<3>() - c.pdot1;
  raw.segment(9 + nj, 3) = f.upsilon_next.segment<3>(3) - c.omega1;
  raw.segment(12 + nj, nj) = f.x_next.joint_rates() - c.qdj1;
  r = c.w_sqrt.cwiseProduct(raw);

  if (!grad) return;
  ImpulseGradient ig;
  if (c.problem.n_contacts > 0) {
    if (*grad == GradientMethod::Smoothed)
      ig = smoothed_impulse_gradient(c.problem, f.solution, cfg.rho_t,
                                     cfg.eps_den_rel, c.excluded);
    else
      ig = nonsmooth_impulse_gradient(c.problem, f.solution, c.excluded);
  }
  const Eigen::VectorXd ds =
      c.problem.n_contacts == 0
          ? Eigen::VectorXd::Zero(2 * nv)
          : state_gradient(ig, c.eval, c.dt);
  const Eigen::VectorXd dv = ds.tail(nv);

  Eigen::VectorXd rawJ(residual_rows(model));
  rawJ.segment(0, 3) = c.dt * dv.head<3>();
  const Eigen::Vector3d w_inc = c.dt * f.upsilon_next.segment<3>(3);
  rawJ.segment(3, 3) = -(so3_left_jacobian_inv(r_rot) * c.R0.transpose() *
                         so3_right_jacobian(w_inc) * c.dt * dv.segment<3>(3));
  rawJ.segment(6, nj) = c.dt * dv.tail(nj);
  rawJ.segment(6 + nj, 3) = dv.head<3>();
  rawJ.segment(9 + nj, 3) = dv.segment<3>(3);
  rawJ.segment(12 + nj, nj) = dv.tail(nj);
  J = c.w_sqrt.cwiseProduct(rawJ);
}

struct PassResult {
  Eigen::VectorXd r;
  Eigen::VectorXd J;
  double loss = 0.0;
  int solve_failures = 0;
};

PassResult evaluate_pass(std::vector<PairContext>& ctxs,
                         const RobotModel& model, const IdentifierConfig& cfg,
                         double mu, std::optional<GradientMethod> grad) {
  const int rows = residual_rows(model);
  PassResult out;
  out.r = Eigen::VectorXd::Zero(rows * ctxs.size());
  if (grad) out.J = Eigen::VectorXd::Zero(rows * ctxs.size());
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    PairContext& c = ctxs[i];
    c.problem.mu = mu;
    const PairForward f = forward(c, mu);
    if (!f.ok) {
      ++out.solve_failures;  // rows stay zero for this pair
      continue;
    }
    Eigen::VectorXd J_seg = Eigen::VectorXd::Zero(grad ? rows : 0);
    pair_rows(c, model, cfg, f, out.r.segment(rows * i, rows), grad,
              grad ? Eigen::Ref<Eigen::VectorXd>(out.J.segment(rows * i, rows))
                   : Eigen::Ref<Eigen::VectorXd>(J_seg));
  }
  out.loss = out.r.squaredNorm();
  return out;
}

Eigen::VectorXd jacobian_for_method(std::vector<PairContext>& ctxs,
                                    const RobotModel& model,
                                    const IdentifierConfig& cfg, double mu,
                                    GradientMethod method,
                                    const Eigen::VectorXd& r_at_mu,
                                    int* failures) {
  switch (method) {
    case GradientMethod::Nonsmooth:
    case GradientMethod::Smoothed: {
      const PassResult p = evaluate_pass(ctxs, model, cfg, mu, method);
      if (failures) *failures += p.solve_failures;
      return p.J;
    }
    case GradientMethod::FiniteDiff: {
      const double h = cfg.fd_step;
      const double lo = std::max(cfg.mu_min, mu - h);
      const double hi = std::min(cfg.mu_max, mu + h);
      const PassResult pp = evaluate_pass(ctxs, model, cfg, hi, std::nullopt);
      const PassResult pm = evaluate_pass(ctxs, model, cfg, lo, std::nullopt);
      return (pp.r - pm.r) / (hi - lo);
    }
    case GradientMethod::RandZeroth: {
      Eigen::VectorXd J = Eigen::VectorXd::Zero(r_at_mu.size());
      for (int s = 0; s < cfg.n_rand_samples; ++s) {
        auto rng = make_rng(cfg.rand_seed, static_cast<std::uint64_t>(s));
        std::normal_distribution<double> normal(0.0, cfg.sigma_rand);
        const double eps = normal(rng);
        const double x = std::clamp(mu + eps, cfg.mu_min, cfg.mu_max);
        const PassResult p = evaluate_pass(ctxs, model, cfg, x, std::nullopt);
        J += (p.r - r_at_mu) * eps / (cfg.sigma_rand * cfg.sigma_rand);
      }
      return J / cfg.n_rand_samples;
    }
    case GradientMethod::RandFirst: {
      Eigen::VectorXd J = Eigen::VectorXd::Zero(r_at_mu.size());
      for (int s = 0; s < cfg.n_rand_samples; ++s) {
        auto rng = make_rng(cfg.rand_seed, static_cast<std::uint64_t>(s));
        std::normal_distribution<double> normal(0.0, cfg.sigma_rand);
        const double eps = normal(rng);
        const double x = std::clamp(mu + eps, cfg.mu_min, cfg.mu_max);
        const PassResult p =
            evaluate_pass(ctxs, model, cfg, x, GradientMethod::Nonsmooth);
        J += p.J;
      }
      return J / cfg.n_rand_samples;
    }
  }
  throw Error("unreachable gradient method");
}

}  // namespace

GeneralizedState BufferEntry::to_state(const RobotModel& model) const {
  GeneralizedState s = model.make_state();
  const int nj = model.n_joints();
  s.q.head<3>() = p;
  Eigen::Quaterniond quat(R);
  quat.normalize();
  s.q(3) = quat.w();
  s.q(4) = quat.x();
  s.q(5) = quat.y();
  s.q(6) = quat.z();
  if (nj > 0) s.q.tail(nj) = q_jnt;
  s.upsilon.head<3>() = p_dot;
  s.upsilon.segment<3>(3) = omega;
  if (nj > 0) s.upsilon.tail(nj) = qdot_jnt;
  s.time = t;
  return s;
}

Eigen::VectorXd BufferEntry::generalized_external_force(
    const RobotModel& model) const {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(model.nv());
  if (f_ext.size() >= 6) f.head<6>() = f_ext.head<6>();
  return f;
}

BufferEntry entry_from_state(const RobotModel& model,
                             const GeneralizedState& state,
                             const Eigen::VectorXd& tau,
                             const Eigen::VectorXd& f_ext) {
  BufferEntry e;
  e.t = state.time;
  e.p = state.base_position();
  e.R = state.base_orientation().toRotationMatrix();
  e.p_dot = state.base_linear_velocity();
  e.omega = state.base_angular_velocity();
  e.q_jnt = state.joint_angles();
  e.qdot_jnt = state.joint_rates();
  e.tau = tau;
  e.f_ext = f_ext;
  const std::size_t np = model.contact_points.size();
  e.contact.assign(np, 0);
  e.foot_vel.assign(np, Eigen::Vector3d::Zero());
  e.rejected.assign(np, 0);
  return e;
}

DataBuffer::DataBuffer(std::size_t capacity, double dt_buffer)
    : capacity_(capacity), dt_(dt_buffer) {
  if (capacity_ == 0) throw BufferError("buffer capacity must be positive");
}

void DataBuffer::push(BufferEntry entry) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!entries_.empty() && !(entry.t > entries_.back().t))
    throw BufferError("buffer entries must have increasing timestamps");
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<BufferEntry> DataBuffer::snapshot() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return {entries_.begin(), entries_.end()};
}

std::size_t DataBuffer::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

Eigen::MatrixXd rejection_scores(std::vector<BufferEntry>& buffer,
                                 double alpha_rej, double gamma_rej) {
  if (buffer.empty()) throw BufferError("rejection_scores on empty buffer");
  const std::size_t nc = buffer.front().contact.size();
  Eigen::MatrixXd scores(buffer.size(), nc);
  std::vector<double> r1_prev(nc, 0.0);  // virtual pre-buffer sample is zero
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    BufferEntry& e = buffer[i];
    e.rejected.assign(nc, 0);
    for (std::size_t k = 0; k < nc; ++k) {
      const double c = e.contact[k] ? 1.0 : 0.0;
      const double vn = std::abs(e.foot_vel[k].z());
      const double r1 = 1.0 - c * std::exp(-alpha_rej * vn);
      const double r2 = std::abs(r1 - r1_prev[k]);
      const double r = std::max(r1, r2);
      scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = r;
      e.rejected[k] = r > gamma_rej ? 1 : 0;
      r1_prev[k] = r1;
    }
  }
  return scores;
}

double confidence_score(const std::vector<BufferEntry>& buffer,
                        double alpha_conf, double v_eps) {
  double sum = 0.0;
  int n = 0;
  for (const BufferEntry& e : buffer) {
    for (std::size_t k = 0; k < e.contact.size(); ++k) {
      if (!e.contact[k]) continue;
      if (!e.rejected.empty() && e.rejected[k]) continue;
      const double vt = e.foot_vel[k].head<2>().norm();
      if (vt <= v_eps) continue;
      sum += vt;
      ++n;
    }
  }
  if (n == 0) return 0.0;
  return 1.0 - std::exp(-alpha_conf * sum / n);
}

ResidualJacobian residual_and_jacobian(const std::vector<BufferEntry>& buffer,
                                       double mu, const RobotModel& model,
                                       const IdentifierConfig& cfg,
                                       GradientMethod method) {
  int skipped = 0;
  std::vector<PairContext> ctxs = build_contexts(buffer, model, cfg, &skipped);
  if (ctxs.empty())
    throw IdentifierError("no usable consecutive buffer pairs");

  ResidualJacobian out;
  const PassResult base = evaluate_pass(ctxs, model, cfg, mu, std::nullopt);
  out.r = base.r;
  out.loss = base.loss;
  out.pairs_used = static_cast<int>(ctxs.size()) - base.solve_failures;
  out.pairs_skipped = skipped + base.solve_failures;
  int failures = 0;
  out.J = jacobian_for_method(ctxs, model, cfg, mu, method, base.r, &failures);
  return out;
}

IdentificationResult solve_identification(const std::vector<BufferEntry>& buffer,
                                          double mu_hat,
                                          const RobotModel& model,
                                          const IdentifierConfig& cfg) {
  if (buffer.size() < 2)
    throw IdentifierError("identification requires at least 2 buffer entries");
  const auto t0 = Clock::now();
  int skipped = 0;
  std::vector<PairContext> ctxs = build_contexts(buffer, model, cfg, &skipped);
  if (ctxs.empty())
    throw IdentifierError("no usable consecutive buffer pairs");

  IdentificationResult res;
  res.pairs_used = static_cast<int>(ctxs.size());

  double mu = std::clamp(mu_hat, cfg.mu_min, cfg.mu_max);
  PassResult pass = evaluate_pass(ctxs, model, cfg, mu, std::nullopt);
  double loss = pass.loss;
  double best_mu = mu, best_loss = loss;

  for (int it = 0; it < cfg.max_gn_iters; ++it) {
    if (ms_since(t0) > 1e3 * cfg.dt_bound) break;
    const Eigen::VectorXd J =
        jacobian_for_method(ctxs, model, cfg, mu, cfg.method, pass.r, nullptr);
    const double JtJ = J.squaredNorm();
    const double Jtr = J.dot(pass.r);
    if (JtJ < cfg.jtj_floor) {
      if (it == 0) {
        res.mu_star = mu_hat;
        res.loss = loss;
        res.no_update = true;
        res.wall_ms = ms_since(t0);
        return res;
      }
      break;
    }

    double cand = mu, cand_loss = loss;
    bool accepted = false;
    const double delta = -Jtr / JtJ;
    double s = 1.0;
    for (int ls = 0; ls < 12 && !accepted; ++ls) {
      const double x = std::clamp(mu + s * delta, cfg.mu_min, cfg.mu_max);
      if (std::abs(x - mu) < 1e-16) break;
      const PassResult trial = evaluate_pass(ctxs, model, cfg, x, std::nullopt);
      if (trial.loss < loss) {
        cand = x;
        cand_loss = trial.loss;
        pass = trial;
        accepted = true;
      }
      s *= 0.5;
    }
    if (!accepted) {
      // Levenberg fallback when the line search stalls.
      const double x = std::clamp(mu - Jtr / (JtJ + cfg.lm_lambda), cfg.mu_min,
                                  cfg.mu_max);
      if (std::abs(x - mu) > 1e-16) {
        const PassResult trial =
            evaluate_pass(ctxs, model, cfg, x, std::nullopt);
        if (trial.loss < loss) {
          cand = x;
          cand_loss = trial.loss;
          pass = trial;
          accepted = true;
        }
      }
    }
    if (!accepted) break;

    const double step = cand - mu;
    const double decrease = loss - cand_loss;
    mu = cand;
    loss = cand_loss;
    ++res.iterations;
    if (loss < best_loss) {
      best_loss = loss;
      best_mu = mu;
    }
    if (std::abs(step) < cfg.step_tol || decrease < cfg.loss_tol) break;
  }

  res.mu_star = std::clamp(best_mu, cfg.mu_min, cfg.mu_max);
  res.loss = best_loss;
  res.wall_ms = ms_since(t0);
  return res;
}

EstimateState update_estimate(EstimateState state, double mu_star, double eta,
                              const IdentifierConfig& cfg, double now) {
  state.eta = eta;
  if (eta > cfg.gamma_conf) {
    state.last_above_threshold = now;
    if (std::abs(state.mu_hat - mu_star) > cfg.epsilon)
      state.mu_hat = mu_star;
    else
      state.mu_hat =
          (1.0 - state.eta_prev) * state.mu_hat + state.eta_prev * mu_star;
    state.mu_hat = std::clamp(state.mu_hat, cfg.mu_min, cfg.mu_max);
    state.last_mu_star = mu_star;
  }
  state.eta_prev = eta;
  return state;
}

EstimateState apply_reset(EstimateState state, const IdentifierConfig& cfg,
                          double now) {
  if (now - state.last_above_threshold >= cfg.reset_hold)
    state.mu_hat = std::clamp(cfg.mu_def, cfg.mu_min, cfg.mu_max);
  return state;
}

CycleRecord run_identifier_cycle(std::vector<BufferEntry> snapshot,
                                 EstimateState& state, const RobotModel& model,
                                 const IdentifierConfig& cfg, double now,
                                 bool reset_enabled) {
  CycleRecord rec;
  rec.t = now;
  rec.method = cfg.method;

  if (!snapshot.empty()) {
    if (cfg.rejection_enabled) {
      rejection_scores(snapshot, cfg.alpha_rej, cfg.gamma_rej);
    } else {
      for (BufferEntry& e : snapshot) e.rejected.assign(e.contact.size(), 0);
    }
    for (const BufferEntry& e : snapshot)
      for (std::uint8_t f : e.rejected) rec.n_rejected += f ? 1 : 0;
  }

  const double eta = snapshot.empty()
                         ? 0.0
                         : confidence_score(snapshot, cfg.alpha_conf, cfg.v_eps);
  rec.eta = eta;
  rec.mu_star = state.mu_hat;

  const double mu_before = state.mu_hat;
  if (eta > cfg.gamma_conf && snapshot.size() >= 2) {
    const IdentificationResult res =
        solve_identification(snapshot, state.mu_hat, model, cfg);
    rec.solved = true;
    rec.mu_star = res.mu_star;
    rec.loss = res.loss;
    rec.wall_ms = res.wall_ms;
    state.last_loss = res.loss;
    state.last_iters = res.iterations;
    state.last_wall_ms = res.wall_ms;
    state.last_no_update = res.no_update;
    state = update_estimate(state, res.mu_star, eta, cfg, now);
  } else {
    state = update_estimate(state, state.mu_hat, eta, cfg, now);
  }
  rec.updated = std::abs(state.mu_hat - mu_before) > 0.0;

  if (reset_enabled) state = apply_reset(state, cfg, now);
  rec.mu_hat = state.mu_hat;
  return rec;
}

}  // namespace fricid

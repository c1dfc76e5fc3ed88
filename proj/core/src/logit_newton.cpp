#include "logit_newton.hpp"

#include <cmath>
#include <limits>

#include "lmpanel/prob.hpp"

namespace lmpanel::detail {

NewtonStatus newton_ascent(const NewtonProblem& prob, VectorXd& theta, double grad_tol,
                           int max_iter, double cap, Diagnostics& diag) {
  NewtonStatus st;
  const Eigen::Index d = theta.size();
  if (d == 0) {
    st.converged = true;
    return st;
  }
  VectorXd grad(d);
  MatrixXd hess(d, d);
  bool cap_warned = false;

  for (int it = 1; it <= max_iter; ++it) {
    st.iterations = it;
    prob.derivs(theta, grad, hess);
    if (grad.lpNorm<Eigen::Infinity>() <= grad_tol) {
      st.converged = true;
      return st;
    }

    MatrixXd hpos = -hess;
    double scale = std::max(1.0, hpos.diagonal().cwiseAbs().maxCoeff());
    double ridge = 0.0;
    VectorXd dir;
    for (;;) {
      MatrixXd m = hpos;
      if (ridge > 0.0) m.diagonal().array() += ridge;
      Eigen::LDLT<MatrixXd> ldlt(m);
      dir = ldlt.solve(grad);
      if (ldlt.info() == Eigen::Success && dir.allFinite() && grad.dot(dir) > 0.0) break;
      if (ridge == 0.0) {
        ridge = 1e-8 * scale;
        diag.warn("newton_ascent: singular Hessian, ridge-regularized step");
      } else {
        ridge *= 100.0;
      }
      if (ridge > 1e8 * scale) {
        dir = grad / scale;  // last-resort gradient step
        break;
      }
    }

    double f0 = prob.value(theta);
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      VectorXd cand = theta + step * dir;
      bool capped = false;
      for (Eigen::Index i = 0; i < d; ++i) {
        if (cand(i) > cap) {
          cand(i) = cap;
          capped = true;
        } else if (cand(i) < -cap) {
          cand(i) = -cap;
          capped = true;
        }
      }
      if ((cand - theta).cwiseAbs().maxCoeff() == 0.0) break;  // pinned at the cap
      if (prob.feasible && !prob.feasible(cand)) continue;
      double f1 = prob.value(cand);
      if (f1 >= f0 && std::isfinite(f1)) {
        theta = cand;
        accepted = true;
        if (capped) {
          ++diag.coef_cap_hits;
          if (!cap_warned) {
            diag.warn("newton_ascent: coefficient clipped at +-" + std::to_string(cap));
            cap_warned = true;
          }
        }
        break;
      }
    }
    if (!accepted) break;  // no ascent possible (boundary or numerically flat)
  }
  prob.derivs(theta, grad, hess);
  st.converged = grad.lpNorm<Eigen::Infinity>() <= grad_tol;
  if (!st.converged) ++diag.newton_nonconverged;
  return st;
}

NewtonStatus fit_weighted_multilogit(const MatrixXd& Z, const MatrixXd& W, int ref,
                                     MatrixXd& coef, double grad_tol, int max_iter,
                                     double cap, Diagnostics& diag) {
  const int L = static_cast<int>(Z.rows());
  const int d = static_cast<int>(Z.cols());
  const int k = static_cast<int>(W.cols());
  const int nfree = k - 1;
  const int dim = d * nfree;

  auto probs_for = [&](const MatrixXd& c, int l) {
    VectorXd eta = (Z.row(l) * c).transpose();
    return multinomial_logit_probs(eta, ref);
  };
  auto unpack = [&](const VectorXd& theta) {
    return MatrixXd(Eigen::Map<const MatrixXd>(theta.data(), d, nfree));
  };
  // Positions of the non-reference categories.
  std::vector<int> cats;
  for (int u = 0; u < k; ++u)
    if (u != ref) cats.push_back(u);

  NewtonProblem prob;
  prob.value = [&](const VectorXd& theta) {
    MatrixXd c = unpack(theta);
    double ll = 0.0;
    for (int l = 0; l < L; ++l) {
      if (W.row(l).sum() <= 0.0) continue;
      VectorXd p = probs_for(c, l);
      for (int u = 0; u < k; ++u)
        if (W(l, u) > 0.0) ll += W(l, u) * std::log(p(u));
    }
    return ll;
  };
  prob.derivs = [&](const VectorXd& theta, VectorXd& grad, MatrixXd& hess) {
    MatrixXd c = unpack(theta);
    grad.setZero(dim);
    hess.setZero(dim, dim);
    for (int l = 0; l < L; ++l) {
      double wtot = W.row(l).sum();
      if (wtot <= 0.0) continue;
      VectorXd p = probs_for(c, l);
      VectorXd z = Z.row(l).transpose();
      MatrixXd zzt = z * z.transpose();
      for (int b = 0; b < nfree; ++b) {
        double e = W(l, cats[b]) - wtot * p(cats[b]);
        grad.segment(b * d, d) += e * z;
      }
      for (int b1 = 0; b1 < nfree; ++b1) {
        for (int b2 = 0; b2 < nfree; ++b2) {
          double a = wtot * p(cats[b1]) * ((b1 == b2 ? 1.0 : 0.0) - p(cats[b2]));
          if (a != 0.0) hess.block(b1 * d, b2 * d, d, d) -= a * zzt;
        }
      }
    }
  };

  VectorXd theta = Eigen::Map<const VectorXd>(coef.data(), dim);
  NewtonStatus st = newton_ascent(prob, theta, grad_tol, max_iter, cap, diag);
  coef = unpack(theta);
  return st;
}

NewtonStatus fit_difflogit(const std::vector<DifflogitObs>& obs, MatrixXd& intercepts,
                           MatrixXd& slopes, double grad_tol, int max_iter, double cap,
                           Diagnostics& diag) {
  const int k = static_cast<int>(intercepts.rows());
  const int p = static_cast<int>(slopes.cols());
  const int n0 = k * (k - 1);
  const int dim = n0 + (k - 1) * p;

  auto idx0 = [&](int ubar, int u) { return ubar * (k - 1) + (u < ubar ? u : u - 1); };
  auto idxs = [&](int a, int m) { return n0 + (a - 1) * p + m; };

  auto unpack = [&](const VectorXd& theta, MatrixXd& ic, MatrixXd& sl) {
    ic.setZero(k, k);
    sl.setZero(k, p);
    for (int ubar = 0; ubar < k; ++ubar)
      for (int u = 0; u < k; ++u)
        if (u != ubar) ic(ubar, u) = theta(idx0(ubar, u));
    for (int a = 1; a < k; ++a)
      for (int m = 0; m < p; ++m) sl(a, m) = theta(idxs(a, m));
  };
  auto row_probs = [&](const MatrixXd& ic, const MatrixXd& sl, const VectorXd& x, int ubar) {
    VectorXd logits(k);
    for (int u = 0; u < k; ++u)
      logits(u) = (u == ubar) ? 0.0 : ic(ubar, u) + x.dot(sl.row(ubar) - sl.row(u));
    double m = logits.maxCoeff();
    VectorXd pr = (logits.array() - m).exp();
    pr /= pr.sum();
    return pr;
  };

  NewtonProblem prob;
  prob.value = [&](const VectorXd& theta) {
    MatrixXd ic, sl;
    unpack(theta, ic, sl);
    double ll = 0.0;
    for (const auto& ob : obs) {
      for (int ubar = 0; ubar < k; ++ubar) {
        if (ob.w.row(ubar).sum() <= 0.0) continue;
        VectorXd pr = row_probs(ic, sl, ob.x, ubar);
        for (int u = 0; u < k; ++u)
          if (ob.w(ubar, u) > 0.0) ll += ob.w(ubar, u) * std::log(pr(u));
      }
    }
    return ll;
  };
  prob.derivs = [&](const VectorXd& theta, VectorXd& grad, MatrixXd& hess) {
    MatrixXd ic, sl;
    unpack(theta, ic, sl);
    grad.setZero(dim);
    hess.setZero(dim, dim);
    // Sparse Jacobian rows of logit(ubar,u) w.r.t. theta.
    std::vector<std::pair<int, double>> jac_u, jac_v;
    for (const auto& ob : obs) {
      for (int ubar = 0; ubar < k; ++ubar) {
        double wtot = ob.w.row(ubar).sum();
        if (wtot <= 0.0) continue;
        VectorXd pr = row_probs(ic, sl, ob.x, ubar);
        auto jac = [&](int u, std::vector<std::pair<int, double>>& out) {
          out.clear();
          out.emplace_back(idx0(ubar, u), 1.0);
          if (ubar >= 1)
            for (int m = 0; m < p; ++m) out.emplace_back(idxs(ubar, m), ob.x(m));
          if (u >= 1)
            for (int m = 0; m < p; ++m) out.emplace_back(idxs(u, m), -ob.x(m));
        };
        for (int u = 0; u < k; ++u) {
          if (u == ubar) continue;
          double e = ob.w(ubar, u) - wtot * pr(u);
          jac(u, jac_u);
          for (auto [i, v] : jac_u) grad(i) += e * v;
        }
        for (int u = 0; u < k; ++u) {
          if (u == ubar) continue;
          jac(u, jac_u);
          for (int v = 0; v < k; ++v) {
            if (v == ubar) continue;
            double a = wtot * pr(u) * ((u == v ? 1.0 : 0.0) - pr(v));
            if (a == 0.0) continue;
            jac(v, jac_v);
            for (auto [i1, c1] : jac_u)
              for (auto [i2, c2] : jac_v) hess(i1, i2) -= a * c1 * c2;
          }
        }
      }
    }
  };

  VectorXd theta(dim);
  for (int ubar = 0; ubar < k; ++ubar)
    for (int u = 0; u < k; ++u)
      if (u != ubar) theta(idx0(ubar, u)) = intercepts(ubar, u);
  for (int a = 1; a < k; ++a)
    for (int m = 0; m < p; ++m) theta(idxs(a, m)) = slopes(a, m);

  NewtonStatus st = newton_ascent(prob, theta, grad_tol, max_iter, cap, diag);
  unpack(theta, intercepts, slopes);
  return st;
}

VectorXd difflogit_gradient(const std::vector<DifflogitObs>& obs, const MatrixXd& intercepts,
                            const MatrixXd& slopes) {
  const int k = static_cast<int>(intercepts.rows());
  const int p = static_cast<int>(slopes.cols());
  const int n0 = k * (k - 1);
  const int dim = n0 + (k - 1) * p;
  auto idx0 = [&](int ubar, int u) { return ubar * (k - 1) + (u < ubar ? u : u - 1); };
  auto idxs = [&](int a, int m) { return n0 + (a - 1) * p + m; };

  VectorXd grad = VectorXd::Zero(dim);
  for (const auto& ob : obs) {
    for (int ubar = 0; ubar < k; ++ubar) {
      double wtot = ob.w.row(ubar).sum();
      if (wtot <= 0.0) continue;
      VectorXd logits(k);
      for (int u = 0; u < k; ++u)
        logits(u) = (u == ubar) ? 0.0
                                : intercepts(ubar, u) + ob.x.dot(slopes.row(ubar) - slopes.row(u));
      double m = logits.maxCoeff();
      VectorXd pr = (logits.array() - m).exp();
      pr /= pr.sum();
      for (int u = 0; u < k; ++u) {
        if (u == ubar) continue;
        double e = ob.w(ubar, u) - wtot * pr(u);
        grad(idx0(ubar, u)) += e;
        if (ubar >= 1)
          for (int q = 0; q < p; ++q) grad(idxs(ubar, q)) += e * ob.x(q);
        if (u >= 1)
          for (int q = 0; q < p; ++q) grad(idxs(u, q)) -= e * ob.x(q);
      }
    }
  }
  return grad;
}

}  // namespace lmpanel::detail

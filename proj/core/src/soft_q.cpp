#include "swirl/soft_q.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "swirl/error.hpp"
#include "swirl/logmath.hpp"

namespace swirl {

AugmentedKernel::AugmentedKernel(Index num_histories, Index num_actions,
                                 std::vector<std::size_t> row_offsets,
                                 std::vector<Entry> entries)
    : num_histories_(num_histories),
      num_actions_(num_actions),
      offsets_(std::move(row_offsets)),
      entries_(std::move(entries)) {}

double AugmentedKernel::prob(Index h, Index a, Index next) const {
  for (const Entry& e : row(h, a)) {
    if (e.next == next) return e.prob;
  }
  return 0.0;
}

AugmentedKernel augmented_env_kernel(const EnvKernel& env, const Spaces& spaces) {
  const AugmentedSpace aug(spaces);
  const Index S = spaces.num_states, A = spaces.num_actions;
  if (env.num_states() != S || env.num_actions() != A) {
    throw InvalidArgument("environment kernel does not match spaces");
  }
  // Sparse successor lists of the base kernel, shared by every history.
  std::vector<std::vector<AugmentedKernel::Entry>> base(S * A);
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) {
      const auto row = env.row(s, a);
      for (Index n = 0; n < S; ++n) {
        if (row[n] > 0.0) base[s * A + a].push_back({n, row[n]});
      }
    }
  }
  const Index H = aug.total_size();
  std::vector<std::size_t> offsets;
  offsets.reserve(H * A + 1);
  std::vector<AugmentedKernel::Entry> entries;
  offsets.push_back(0);
  for (Index h = 0; h < H; ++h) {
    const Index last = aug.last(h);
    for (Index a = 0; a < A; ++a) {
      for (const auto& e : base[last * A + a]) {
        entries.push_back({aug.shift(h, e.next), e.prob});
      }
      offsets.push_back(entries.size());
    }
  }
  return AugmentedKernel(H, A, std::move(offsets), std::move(entries));
}

namespace {

void check_temperature(double gamma, double alpha) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("alpha must be positive");
  }
}

void soft_value_into(std::span<const double> q, Index num_actions, double alpha,
                     std::span<double> value) {
  const Index H = value.size();
  for (Index h = 0; h < H; ++h) {
    const double* row = q.data() + h * num_actions;
    double m = row[0];
    for (Index a = 1; a < num_actions; ++a) m = std::max(m, row[a]);
    double acc = 0.0;
    for (Index a = 0; a < num_actions; ++a) acc += std::exp((row[a] - m) / alpha);
    value[h] = m + alpha * std::log(acc);
  }
}

void bellman_from_value(std::span<const double> reward, const AugmentedKernel& kernel,
                        double gamma, std::span<const double> value,
                        std::span<double> out) {
  const Index H = kernel.num_histories(), A = kernel.num_actions();
  for (Index h = 0; h < H; ++h) {
    for (Index a = 0; a < A; ++a) {
      double expect = 0.0;
      for (const auto& e : kernel.row(h, a)) expect += e.prob * value[e.next];
      out[h * A + a] = reward[h * A + a] + gamma * expect;
    }
  }
}

}  // namespace

std::vector<double> soft_value(std::span<const double> q, Index num_actions,
                               double alpha) {
  std::vector<double> v(q.size() / num_actions);
  soft_value_into(q, num_actions, alpha, v);
  return v;
}

void soft_bellman_sweep(std::span<const double> reward, const AugmentedKernel& kernel,
                        double gamma, double alpha, std::span<const double> q,
                        std::span<double> out) {
  const Index HA = kernel.num_histories() * kernel.num_actions();
  if (reward.size() != HA || q.size() != HA || out.size() != HA) {
    throw InvalidArgument("soft Bellman sweep: table sizes do not match the kernel");
  }
  std::vector<double> value(kernel.num_histories());
  soft_value_into(q, kernel.num_actions(), alpha, value);
  bellman_from_value(reward, kernel, gamma, value, out);
}

namespace {

// Type-II Anderson mixing over the last m iterates. Solves
// min ||f - dF * c||_2 by modified Gram-Schmidt on the columns of dF.
class AndersonMixer {
 public:
  AndersonMixer(Index n, int memory) : n_(n), memory_(memory) {}

  void reset() {
    dx_.clear();
    df_.clear();
    has_prev_ = false;
  }

  // Returns false when no history is available yet (caller takes a plain step).
  bool mix(std::span<const double> x, std::span<const double> f, std::span<double> out) {
    if (has_prev_) {
      std::vector<double> a(n_), b(n_);
      for (Index i = 0; i < n_; ++i) {
        a[i] = x[i] - prev_x_[i];
        b[i] = f[i] - prev_f_[i];
      }
      dx_.push_back(std::move(a));
      df_.push_back(std::move(b));
      if (static_cast<int>(dx_.size()) > memory_) {
        dx_.erase(dx_.begin());
        df_.erase(df_.begin());
      }
    }
    prev_x_.assign(x.begin(), x.end());
    prev_f_.assign(f.begin(), f.end());
    has_prev_ = true;
    if (dx_.empty()) return false;

    const Index m = dx_.size();
    std::vector<std::vector<double>> q = df_;
    std::vector<double> r(m * m, 0.0);
    for (Index j = 0; j < m; ++j) {
      for (Index k = 0; k < j; ++k) {
        double dot = 0.0;
        for (Index i = 0; i < n_; ++i) dot += q[k][i] * q[j][i];
        r[k * m + j] = dot;
        for (Index i = 0; i < n_; ++i) q[j][i] -= dot * q[k][i];
      }
      double norm = 0.0;
      for (double v : q[j]) norm += v * v;
      norm = std::sqrt(norm);
      if (!(norm > 1e-14)) {
        reset();
        return false;
      }
      r[j * m + j] = norm;
      for (double& v : q[j]) v /= norm;
    }
    std::vector<double> c(m);
    for (Index j = 0; j < m; ++j) {
      double dot = 0.0;
      for (Index i = 0; i < n_; ++i) dot += q[j][i] * f[i];
      c[j] = dot;
    }
    for (Index j = m; j-- > 0;) {
      for (Index k = j + 1; k < m; ++k) c[j] -= r[j * m + k] * c[k];
      c[j] /= r[j * m + j];
    }
    for (Index i = 0; i < n_; ++i) {
      double v = x[i] + f[i];
      for (Index j = 0; j < m; ++j) v -= c[j] * (dx_[j][i] + df_[j][i]);
      out[i] = v;
    }
    return true;
  }

 private:
  Index n_;
  int memory_;
  std::vector<std::vector<double>> dx_, df_;
  std::vector<double> prev_x_, prev_f_;
  bool has_prev_ = false;
};

}  // namespace

QTable soft_q_iterate(std::span<const double> reward, const AugmentedKernel& kernel,
                      double gamma, double alpha, const SoftQOptions& options) {
  check_temperature(gamma, alpha);
  if (options.max_iters < 1) throw InvalidArgument("soft-Q needs at least one sweep");
  if (options.anderson_memory < 0) throw InvalidArgument("anderson_memory must be >= 0");
  const Index H = kernel.num_histories(), A = kernel.num_actions();
  if (reward.size() != H * A) {
    throw InvalidArgument("reward slice must have H*A entries");
  }
  for (double r : reward) {
    if (!std::isfinite(r)) throw InvalidArgument("reward table has a non-finite entry");
  }

  const Index n = H * A;
  QTable q;
  q.num_histories = H;
  q.num_actions = A;
  std::vector<double> x(n, 0.0), image(n), f(n), trial(n);
  std::vector<double> best_image(n);
  std::vector<double> value(H);
  const double bound_scale = gamma / (1.0 - gamma);
  AndersonMixer mixer(n, options.anderson_memory);
  // Residual and shift of the last accepted iterate. A mixed candidate whose
  // residual does not improve on it is discarded for a plain step from it.
  double best_res = std::numeric_limits<double>::infinity();
  double best_shift = 0.0;
  bool candidate = false;

  for (int k = 1; k <= options.max_iters; ++k) {
    soft_value_into(x, A, alpha, value);
    bellman_from_value(reward, kernel, gamma, value, image);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double res = 0.0;
    for (Index i = 0; i < n; ++i) {
      f[i] = image[i] - x[i];
      lo = std::min(lo, f[i]);
      hi = std::max(hi, f[i]);
      res = std::max(res, std::abs(f[i]));
    }
    q.iterations_run = k;
    if (candidate && !(res < best_res)) {
      mixer.reset();
      for (Index i = 0; i < n; ++i) x[i] = best_image[i] + best_shift;
      candidate = false;
      continue;
    }
    if (!std::isfinite(res)) throw NumericalError("soft-Q iteration diverged");
    best_res = res;
    best_image = image;
    best_shift = options.extrapolate ? bound_scale * 0.5 * (lo + hi) : 0.0;
    if (res < options.tol) break;

    candidate = options.anderson_memory > 0 && mixer.mix(x, f, trial);
    if (candidate) {
      x.swap(trial);
    } else {
      for (Index i = 0; i < n; ++i) x[i] = image[i] + best_shift;
    }
  }
  q.residual = best_res;
  q.values = std::move(best_image);
  return q;
}

PolicyTable boltzmann_policy(const QTable& q, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  const Index H = q.num_histories, A = q.num_actions;
  PolicyTable p;
  p.num_histories = H;
  p.num_actions = A;
  p.probs.resize(H * A);
  p.log_probs.resize(H * A);
  for (Index h = 0; h < H; ++h) {
    const double* row = q.values.data() + h * A;
    double m = row[0];
    for (Index a = 1; a < A; ++a) m = std::max(m, row[a]);
    double acc = 0.0;
    for (Index a = 0; a < A; ++a) acc += std::exp((row[a] - m) / alpha);
    const double log_z = std::log(acc);
    for (Index a = 0; a < A; ++a) {
      const double lp = (row[a] - m) / alpha - log_z;
      p.log_probs[h * A + a] = lp;
      p.probs[h * A + a] = std::exp(lp);
    }
  }
  return p;
}

std::vector<double> policy_reward_gradient(std::span<const double> weight,
                                           const PolicyTable& policy,
                                           const AugmentedKernel& kernel, double gamma,
                                           double alpha, int max_iters, double tol) {
  check_temperature(gamma, alpha);
  const Index H = kernel.num_histories(), A = kernel.num_actions();
  if (weight.size() != H * A || policy.probs.size() != H * A) {
    throw InvalidArgument("policy gradient: table sizes do not match the kernel");
  }
  std::vector<double> g(H * A);
  double scale = 0.0;
  for (Index h = 0; h < H; ++h) {
    double row_weight = 0.0;
    for (Index a = 0; a < A; ++a) row_weight += weight[h * A + a];
    for (Index a = 0; a < A; ++a) {
      g[h * A + a] = (weight[h * A + a] - policy.probs[h * A + a] * row_weight) / alpha;
      scale = std::max(scale, std::abs(g[h * A + a]));
    }
  }
  std::vector<double> lambda = g;
  if (gamma == 0.0 || scale == 0.0) return lambda;

  std::vector<double> inflow(H);
  std::vector<double> next(H * A);
  const double stop = tol * std::max(1.0, scale);
  for (int k = 0; k < max_iters; ++k) {
    std::fill(inflow.begin(), inflow.end(), 0.0);
    for (Index h = 0; h < H; ++h) {
      for (Index a = 0; a < A; ++a) {
        const double l = lambda[h * A + a];
        if (l == 0.0) continue;
        for (const auto& e : kernel.row(h, a)) inflow[e.next] += e.prob * l;
      }
    }
    double change = 0.0;
    for (Index h = 0; h < H; ++h) {
      for (Index a = 0; a < A; ++a) {
        const Index i = h * A + a;
        next[i] = g[i] + gamma * policy.probs[i] * inflow[h];
        change = std::max(change, std::abs(next[i] - lambda[i]));
      }
    }
    lambda.swap(next);
    if (!std::isfinite(change)) throw NumericalError("reward adjoint diverged");
    if (change < stop) break;
  }
  return lambda;
}

}  // namespace swirl

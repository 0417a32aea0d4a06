#include "swirl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "swirl/error.hpp"
#include "swirl/inference.hpp"
#include "swirl/parallel.hpp"

namespace swirl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Index int_pow(Index base, Index exp) {
  Index r = 1;
  for (Index i = 0; i < exp; ++i) r *= base;
  return r;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw DataError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw DataError("bad number '" + s + "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  return quantile_linear(v, 0.5);
}

// Columns first, then the matching per row and the leftover rows.
ModeMatching matching_from_scores(std::span<const double> score, Index rows, Index cols) {
  const auto assign = max_weight_assignment(score, rows, cols);
  ModeMatching m;
  m.learned_to_truth.assign(rows, 0);
  m.truth_to_learned.assign(cols, 0);
  std::vector<bool> col_done(cols, false);
  for (Index r = 0; r < rows; ++r) {
    if (assign[r] >= 0) {
      m.learned_to_truth[r] = static_cast<Index>(assign[r]);
      m.truth_to_learned[static_cast<Index>(assign[r])] = r;
      col_done[static_cast<Index>(assign[r])] = true;
    } else {
      Index best = 0;
      for (Index c = 1; c < cols; ++c) {
        if (score[r * cols + c] > score[r * cols + best]) best = c;
      }
      m.learned_to_truth[r] = best;
    }
  }
  for (Index c = 0; c < cols; ++c) {
    if (col_done[c]) continue;
    Index best = 0;
    for (Index r = 1; r < rows; ++r) {
      if (score[r * cols + c] > score[best * cols + c]) best = r;
    }
    m.truth_to_learned[c] = best;
  }
  return m;
}

}  // namespace

HeldoutLL heldout_ll(const DiscreteHmMdp& model, std::span<const PolicyTable> policies,
                     std::span<const Trajectory> test) {
  if (test.empty()) throw InvalidArgument("held-out set is empty");
  HeldoutLL out;
  double steps = 0.0, total = 0.0;
  for (const Trajectory& tr : test) {
    const double ll = sequence_log_likelihood(tr, model, policies);
    out.per_trajectory.push_back(ll);
    total += ll;
    steps += static_cast<double>(tr.length());
  }
  out.mean_per_trajectory = total / static_cast<double>(test.size());
  out.mean_per_step = total / steps;
  return out;
}

HeldoutLL heldout_ll(const DiscreteHmMdp& model, std::span<const Trajectory> test,
                     const SoftQOptions& options) {
  const auto policies =
      solve_policies(model, augmented_env_kernel(model.env, model.spaces), options);
  return heldout_ll(model, policies, test);
}

double pearson(std::span<const double> x, std::span<const double> y, bool* degenerate) {
  if (x.size() != y.size()) throw InvalidArgument("pearson: length mismatch");
  if (degenerate) *degenerate = false;
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<Index> idx(v.size());
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (Index i = 0; i < idx.size();) {
    Index j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: length mismatch");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

std::vector<long> max_weight_assignment(std::span<const double> score, Index rows,
                                        Index cols) {
  if (score.size() != rows * cols) throw InvalidArgument("assignment: score size mismatch");
  const Index n = std::max(rows, cols);
  // Hungarian algorithm on the padded square cost matrix (1-based potentials).
  auto cost = [&](Index i, Index j) {
    return (i < rows && j < cols) ? -score[i * cols + j] : 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<long> out(rows, -1);
  for (Index j = 1; j <= n; ++j) {
    const Index i = p[j] - 1;
    if (i < rows && j - 1 < cols) out[i] = static_cast<long>(j - 1);
  }
  return out;
}

RewardTable lift_rewards(const RewardTable& rewards, Index num_states, Index from_len,
                         Index to_len) {
  if (to_len < from_len) throw InvalidArgument("cannot lift rewards to a shorter history");
  const Index from_h = int_pow(num_states, from_len), to_h = int_pow(num_states, to_len);
  if (rewards.num_histories() != from_h) {
    throw InvalidArgument("reward table does not match S^L histories");
  }
  const Index Z = rewards.num_modes(), A = rewards.num_actions();
  RewardTable out(Z, to_h, A);
  for (Index z = 0; z < Z; ++z) {
    for (Index h = 0; h < to_h; ++h) {
      for (Index a = 0; a < A; ++a) out(z, h, a) = rewards(z, h % from_h, a);
    }
  }
  return out;
}

std::vector<double> project_out_shaping(std::span<const double> values,
                                        std::span<const unsigned char> mask,
                                        Index num_states, Index history_len,
                                        Index num_actions, double gamma) {
  const Index H = int_pow(num_states, history_len);
  if (values.size() != H * num_actions || (!mask.empty() && mask.size() != H)) {
    throw InvalidArgument("shaping projection: table sizes do not match");
  }
  const Index P = int_pow(num_states, history_len - 1);
  std::vector<Index> rows;  // selected flat (h, a) entries
  for (Index h = 0; h < H; ++h) {
    if (!mask.empty() && !mask[h]) continue;
    for (Index a = 0; a < num_actions; ++a) rows.push_back(h * num_actions + a);
  }
  const Index n = rows.size();
  // Basis of the shaping span over the selected entries, orthonormalized by
  // modified Gram-Schmidt. Column P is the constant.
  std::vector<std::vector<double>> basis;
  for (Index p = 0; p <= P; ++p) {
    std::vector<double> col(n);
    for (Index i = 0; i < n; ++i) {
      if (p == P) {
        col[i] = 1.0;
        continue;
      }
      const Index h = rows[i] / num_actions;
      const double older = (h / num_states) == p ? 1.0 : 0.0;
      const double newer = (h % P) == p ? 1.0 : 0.0;
      col[i] = P == 1 ? 0.0 : older - gamma * newer;
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double dot = 0.0;
        for (Index i = 0; i < n; ++i) dot += b[i] * col[i];
        for (Index i = 0; i < n; ++i) col[i] -= dot * b[i];
      }
    }
    double norm = 0.0;
    for (double c : col) norm += c * c;
    norm = std::sqrt(norm);
    if (norm < 1e-9) continue;
    for (double& c : col) c /= norm;
    basis.push_back(std::move(col));
  }
  std::vector<double> out(n);
  for (Index i = 0; i < n; ++i) out[i] = values[rows[i]];
  for (const auto& b : basis) {
    double dot = 0.0;
    for (Index i = 0; i < n; ++i) dot += b[i] * out[i];
    for (Index i = 0; i < n; ++i) out[i] -= dot * b[i];
  }
  return out;
}

RewardCorrelation reward_correlation(const RewardTable& learned, Index learned_len,
                                     const RewardTable& truth, Index truth_len,
                                     Index num_states,
                                     std::span<const unsigned char> history_mask,
                                     std::optional<double> shaping_gamma) {
  if (learned.num_actions() != truth.num_actions()) {
    throw InvalidArgument("reward tables disagree on the action count");
  }
  const Index len = std::max(learned_len, truth_len);
  const RewardTable l = lift_rewards(learned, num_states, learned_len, len);
  const RewardTable t = lift_rewards(truth, num_states, truth_len, len);
  const Index H = l.num_histories(), A = l.num_actions();
  std::vector<unsigned char> mask(H, 1);
  if (!history_mask.empty()) {
    const Index mh = history_mask.size();
    if (H % mh != 0 || int_pow(num_states, len) % mh != 0) {
      throw InvalidArgument("history mask size does not divide the history space");
    }
    for (Index h = 0; h < H; ++h) mask[h] = history_mask[h % mh];
  }

  const Index Zl = l.num_modes(), Zt = t.num_modes();
  std::vector<std::vector<double>> lv(Zl), tv(Zt);
  for (Index h = 0; h < H; ++h) {
    if (!mask[h]) continue;
    for (Index a = 0; a < A; ++a) {
      for (Index z = 0; z < Zl; ++z) lv[z].push_back(l(z, h, a));
      for (Index z = 0; z < Zt; ++z) tv[z].push_back(t(z, h, a));
    }
  }
  std::vector<std::vector<double>> lp = lv, tp = tv;
  if (shaping_gamma) {
    for (Index z = 0; z < Zl; ++z) {
      lp[z] = project_out_shaping(l.mode(z), mask, num_states, len, A, *shaping_gamma);
    }
    for (Index z = 0; z < Zt; ++z) {
      tp[z] = project_out_shaping(t.mode(z), mask, num_states, len, A, *shaping_gamma);
    }
  }
  std::vector<double> score(Zl * Zt), raw(Zl * Zt);
  std::vector<bool> degenerate(Zl * Zt);
  for (Index i = 0; i < Zl; ++i) {
    for (Index j = 0; j < Zt; ++j) {
      bool d = false;
      score[i * Zt + j] = pearson(lp[i], tp[j], &d);
      degenerate[i * Zt + j] = d;
      raw[i * Zt + j] = pearson(lv[i], tv[j]);
    }
  }
  RewardCorrelation out;
  out.matching = matching_from_scores(score, Zl, Zt);
  for (Index j = 0; j < Zt; ++j) {
    const Index i = out.matching.truth_to_learned[j];
    out.per_mode.push_back(score[i * Zt + j]);
    out.degenerate.push_back(degenerate[i * Zt + j]);
    out.per_mode_raw.push_back(raw[i * Zt + j]);
  }
  return out;
}

ModeMatching best_accuracy_matching(std::span<const std::vector<Index>> predicted,
                                    std::span<const std::vector<Index>> truth,
                                    Index learned_modes, Index true_modes) {
  if (predicted.size() != truth.size()) throw InvalidArgument("label set size mismatch");
  std::vector<double> counts(learned_modes * true_modes, 0.0);
  for (Index n = 0; n < predicted.size(); ++n) {
    if (predicted[n].size() != truth[n].size()) {
      throw InvalidArgument("label length mismatch in trajectory " + std::to_string(n));
    }
    for (Index t = 0; t < predicted[n].size(); ++t) {
      if (predicted[n][t] >= learned_modes || truth[n][t] >= true_modes) {
        throw InvalidArgument("label outside the mode range");
      }
      counts[predicted[n][t] * true_modes + truth[n][t]] += 1.0;
    }
  }
  return matching_from_scores(counts, learned_modes, true_modes);
}

double segmentation_accuracy(std::span<const std::vector<Index>> predicted,
                             std::span<const std::vector<Index>> truth,
                             const ModeMatching& matching) {
  if (predicted.size() != truth.size()) throw InvalidArgument("label set size mismatch");
  if (predicted.empty()) throw InvalidArgument("no labels to score");
  double acc = 0.0;
  for (Index n = 0; n < predicted.size(); ++n) {
    if (predicted[n].size() != truth[n].size()) {
      throw InvalidArgument("label length mismatch in trajectory " + std::to_string(n));
    }
    if (predicted[n].empty()) throw InvalidArgument("empty label sequence");
    Index hits = 0;
    for (Index t = 0; t < predicted[n].size(); ++t) {
      if (predicted[n][t] >= matching.learned_to_truth.size()) {
        throw InvalidArgument("predicted label outside the matching");
      }
      hits += matching.learned_to_truth[predicted[n][t]] == truth[n][t];
    }
    acc += static_cast<double>(hits) / static_cast<double>(predicted[n].size());
  }
  return acc / static_cast<double>(predicted.size());
}

double quantile_linear(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty set");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<Index>(std::floor(pos));
  const Index hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

IqrSummary summarize(std::span<const double> values, bool screen) {
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  IqrSummary out;
  out.median = quantile_linear(s, 0.5);
  out.q1 = quantile_linear(s, 0.25);
  out.q3 = quantile_linear(s, 0.75);
  out.iqr = out.q3 - out.q1;
  const double lo = out.q1 - 1.5 * out.iqr, hi = out.q3 + 1.5 * out.iqr;
  for (double v : values) {
    if (screen && (v > hi || v < lo)) {
      out.outliers.push_back(v);
    } else {
      out.kept.push_back(v);
    }
  }
  return out;
}

}  // namespace

IqrSummary iqr_outliers(std::span<const double> values) {
  if (values.size() < 4) throw InvalidArgument("outlier screening needs at least 4 values");
  return summarize(values, true);
}

std::string FitReport::label() const {
  if (model != "SWIRL") return model;
  return variant + "-" + std::to_string(history_len) + "-Z" + std::to_string(num_modes);
}

double FitReport::mean_reward_corr() const {
  if (!reward_corr || reward_corr->empty()) return kNaN;
  return std::accumulate(reward_corr->begin(), reward_corr->end(), 0.0) /
         static_cast<double>(reward_corr->size());
}

FitReport evaluate_fit(const FitResult& fit, const std::string& model_name,
                       const EvaluationInputs& inputs, double fraction,
                       const SoftQOptions& options) {
  const DiscreteHmMdp& m = fit.model;
  FitReport r;
  r.model = model_name;
  r.variant = model_name == "SWIRL"
                  ? (fit.config.variant == TransitionVariant::kStateIndependent ? "I" : "S")
                  : "";
  r.history_len = m.spaces.history_len;
  r.num_modes = m.spaces.num_modes;
  r.seed = fit.seed;
  r.fraction = fraction;
  r.train_ll = fit.final_train_ll();

  const auto policies = solve_policies(m, augmented_env_kernel(m.env, m.spaces), options);
  const HeldoutLL ll = heldout_ll(m, policies, inputs.test);
  r.test_ll = ll.mean_per_trajectory;
  r.test_ll_per_step = ll.mean_per_step;

  std::optional<ModeMatching> matching;
  if (inputs.truth_model && inputs.truth) {
    const auto corr = reward_correlation(m.rewards, m.spaces.history_len,
                                         inputs.truth->true_rewards,
                                         inputs.truth_model->spaces.history_len,
                                         m.spaces.num_states, inputs.truth->feasible_histories,
                                         inputs.truth_model->gamma);
    r.reward_corr = corr.per_mode;
    r.reward_corr_raw = corr.per_mode_raw;
    matching = corr.matching;
  }
  if (!inputs.test_labels.empty()) {
    std::vector<std::vector<Index>> predicted;
    predicted.reserve(inputs.test.size());
    for (const Trajectory& tr : inputs.test) {
      predicted.push_back(map_segments(forward_backward(tr, m, policies)));
    }
    Index true_modes = 0;
    for (const auto& lab : inputs.test_labels) {
      for (Index z : lab) true_modes = std::max(true_modes, z + 1);
    }
    if (inputs.truth_model) true_modes = std::max(true_modes, inputs.truth_model->spaces.num_modes);
    if (!matching) {
      matching = best_accuracy_matching(predicted, inputs.test_labels, m.spaces.num_modes,
                                        true_modes);
    }
    r.segmentation_accuracy = segmentation_accuracy(predicted, inputs.test_labels, *matching);
  }
  return r;
}

std::string reports_to_csv(std::span<const FitReport> reports) {
  const bool corr = !reports.empty() && std::all_of(reports.begin(), reports.end(),
                                                    [](const FitReport& r) {
                                                      return r.reward_corr.has_value();
                                                    });
  const bool seg = !reports.empty() && std::all_of(reports.begin(), reports.end(),
                                                   [](const FitReport& r) {
                                                     return r.segmentation_accuracy.has_value();
                                                   });
  std::string out = "model,variant,L,Z,seed,fraction,train_ll,test_ll,test_ll_per_step";
  if (corr) out += ",reward_corr_mean,reward_corr,reward_corr_raw";
  if (seg) out += ",segmentation_accuracy";
  out += '\n';
  for (const FitReport& r : reports) {
    out += r.model + ',' + r.variant + ',' + std::to_string(r.history_len) + ',' +
           std::to_string(r.num_modes) + ',' + std::to_string(r.seed) + ',' +
           format_double(r.fraction) + ',' + format_double(r.train_ll) + ',' +
           format_double(r.test_ll) + ',' + format_double(r.test_ll_per_step);
    if (corr) {
      out += ',' + format_double(r.mean_reward_corr()) + ',';
      out += join_doubles(*r.reward_corr) + ',';
      out += r.reward_corr_raw ? join_doubles(*r.reward_corr_raw) : std::string();
    }
    if (seg) out += ',' + format_double(*r.segmentation_accuracy);
    out += '\n';
  }
  return out;
}

std::vector<FitReport> reports_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty report CSV");
  const auto header = split(line, ',');
  const auto col = [&](const std::string& name) -> long {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<long>(it - header.begin());
  };
  for (const char* required : {"model", "variant", "L", "Z", "seed", "fraction", "train_ll",
                               "test_ll", "test_ll_per_step"}) {
    if (col(required) < 0) throw DataError(std::string("report CSV lacks column ") + required);
  }
  const long corr_col = col("reward_corr"), raw_col = col("reward_corr_raw"),
             seg_col = col("segmentation_accuracy");
  std::vector<FitReport> out;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) {
      throw DataError("report CSV line " + std::to_string(line_no) + " has wrong field count");
    }
    FitReport r;
    r.model = f[col("model")];
    r.variant = f[col("variant")];
    r.history_len = static_cast<Index>(parse_double(f[col("L")]));
    r.num_modes = static_cast<Index>(parse_double(f[col("Z")]));
    r.seed = std::stoull(f[col("seed")]);
    r.fraction = parse_double(f[col("fraction")]);
    r.train_ll = parse_double(f[col("train_ll")]);
    r.test_ll = parse_double(f[col("test_ll")]);
    r.test_ll_per_step = parse_double(f[col("test_ll_per_step")]);
    if (corr_col >= 0) {
      std::vector<double> c;
      for (const auto& s : split(f[corr_col], ';')) c.push_back(parse_double(s));
      r.reward_corr = std::move(c);
    }
    if (raw_col >= 0 && !f[raw_col].empty()) {
      std::vector<double> c;
      for (const auto& s : split(f[raw_col], ';')) c.push_back(parse_double(s));
      r.reward_corr_raw = std::move(c);
    }
    if (seg_col >= 0) r.segmentation_accuracy = parse_double(f[seg_col]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MetricAggregate> aggregate_reports(std::span<const FitReport> reports) {
  std::vector<std::pair<std::string, double>> keys;
  std::vector<std::vector<const FitReport*>> groups;
  for (const FitReport& r : reports) {
    const auto key = std::make_pair(r.label(), r.fraction);
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      groups.emplace_back();
      it = keys.end() - 1;
    }
    groups[static_cast<Index>(it - keys.begin())].push_back(&r);
  }
  std::vector<MetricAggregate> out;
  for (Index g = 0; g < keys.size(); ++g) {
    const bool screen = groups[g].size() >= 4;
    MetricAggregate a;
    a.label = keys[g].first;
    a.fraction = keys[g].second;
    std::vector<double> ll, corr, seg;
    bool has_corr = true, has_seg = true;
    for (const FitReport* r : groups[g]) {
      ll.push_back(r->test_ll);
      has_corr = has_corr && r->reward_corr.has_value();
      has_seg = has_seg && r->segmentation_accuracy.has_value();
      if (r->reward_corr) corr.push_back(r->mean_reward_corr());
      if (r->segmentation_accuracy) seg.push_back(*r->segmentation_accuracy);
    }
    a.test_ll = summarize(ll, screen);
    if (has_corr) a.reward_corr = summarize(corr, screen);
    if (has_seg) a.segmentation_accuracy = summarize(seg, screen);
    out.push_back(std::move(a));
  }
  return out;
}

std::string aggregate_to_json(std::span<const MetricAggregate> aggregates,
                              std::span<const FitReport> reports) {
  using Json = nlohmann::ordered_json;
  const auto summary = [](const IqrSummary& s) {
    Json j;
    j["median"] = s.median;
    j["q1"] = s.q1;
    j["q3"] = s.q3;
    j["iqr"] = s.iqr;
    j["outliers"] = s.outliers;
    return j;
  };
  Json doc;
  doc["format"] = "swirl-report/1";
  Json groups = Json::array();
  for (const MetricAggregate& a : aggregates) {
    Json g;
    g["label"] = a.label;
    g["fraction"] = a.fraction;
    g["test_ll"] = summary(a.test_ll);
    if (a.reward_corr) g["reward_corr"] = summary(*a.reward_corr);
    if (a.segmentation_accuracy) g["segmentation_accuracy"] = summary(*a.segmentation_accuracy);
    groups.push_back(std::move(g));
  }
  doc["groups"] = std::move(groups);
  Json recs = Json::array();
  for (const FitReport& r : reports) {
    Json j;
    j["model"] = r.model;
    j["variant"] = r.variant;
    j["L"] = r.history_len;
    j["Z"] = r.num_modes;
    j["seed"] = r.seed;
    j["fraction"] = r.fraction;
    j["train_ll"] = r.train_ll;
    j["test_ll"] = r.test_ll;
    j["test_ll_per_step"] = r.test_ll_per_step;
    if (r.reward_corr) j["reward_corr"] = *r.reward_corr;
    if (r.reward_corr_raw) j["reward_corr_raw"] = *r.reward_corr_raw;
    if (r.segmentation_accuracy) j["segmentation_accuracy"] = *r.segmentation_accuracy;
    recs.push_back(std::move(j));
  }
  doc["reports"] = std::move(recs);
  return doc.dump(2);
}

std::vector<RobustnessPoint> robustness_sweep(std::span<const double> fractions,
                                              const RobustnessInputs& in) {
  if (!in.env) throw InvalidArgument("robustness sweep needs an environment kernel");
  std::vector<RobustnessPoint> curve;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 0.5)) throw InvalidArgument("perturbation fractions must lie in [0, 0.5]");
    std::vector<FitResult> fits;
    if (f == 0.0 && !in.fraction_zero_fits.empty()) {
      fits.assign(in.fraction_zero_fits.begin(), in.fraction_zero_fits.end());
    } else {
      const auto perturbed = perturb_trajectories(in.train, f, in.env->num_states(),
                                                  in.env->num_actions(), in.perturb_seed);
      FitConfig c = in.config;
      c.workers = in.workers;
      fits = multi_seed_fit(perturbed, *in.env, c, in.num_seeds, in.keep_top);
    }
    RobustnessPoint p;
    p.fraction = f;
    p.reports.resize(fits.size());
    parallel_for(fits.size(), in.workers, [&](Index k) {
      p.reports[k] = evaluate_fit(fits[k], "SWIRL", in.eval, f);
    });
    curve.push_back(std::move(p));
  }
  return curve;
}

std::string robustness_to_csv(std::span<const RobustnessPoint> curve) {
  std::string out = "fraction,median_test_ll,median_reward_corr,median_accuracy\n";
  for (const RobustnessPoint& p : curve) {
    std::vector<double> ll, corr, acc;
    for (const FitReport& r : p.reports) {
      ll.push_back(r.test_ll);
      if (r.reward_corr) corr.push_back(r.mean_reward_corr());
      if (r.segmentation_accuracy) acc.push_back(*r.segmentation_accuracy);
    }
    out += format_double(p.fraction) + ',' + format_double(median_of(ll)) + ',' +
           format_double(median_of(corr)) + ',' + format_double(median_of(acc)) + '\n';
  }
  return out;
}

}  // namespace swirl

#pragma once

// One-way ANOVA and UEMS-balanced participant splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "datkit/error.hpp"
#include "datkit/text.hpp"

namespace datkit {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fast for x < (a+1)/(a+b+2); use the
  // symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Survival function of the F distribution, P(F > f).
inline double f_survival(double f, double df1, double df2) {
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return regularized_incomplete_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f));
}

struct GroupSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
};

struct AnovaResult {
  double f_statistic = 0.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double p_value = 1.0;
  // Set when the within-group variance is zero but group means differ.
  bool infinite_f = false;
};

/// One-way ANOVA from group sizes, means and sample SDs.
inline AnovaResult anova_oneway(std::span<const GroupSummary> groups) {
  if (groups.size() < 2) throw ValidationError("ANOVA needs at least two groups");
  std::size_t total = 0;
  double weighted = 0.0;
  for (const auto& g : groups) {
    if (g.n < 2) throw ValidationError("ANOVA needs at least two observations per group");
    total += g.n;
    weighted += static_cast<double>(g.n) * g.mean;
  }
  const double grand = weighted / static_cast<double>(total);
  double ss_between = 0.0, ss_within = 0.0;
  for (const auto& g : groups) {
    ss_between += static_cast<double>(g.n) * (g.mean - grand) * (g.mean - grand);
    ss_within += static_cast<double>(g.n - 1) * g.sd * g.sd;
  }
  AnovaResult r;
  r.df_between = groups.size() - 1;
  r.df_within = total - groups.size();
  const double ms_between = ss_between / static_cast<double>(r.df_between);
  const double ms_within = ss_within / static_cast<double>(r.df_within);
  // Relative guard so means that agree up to rounding count as equal.
  const double scale = std::max(1.0, std::abs(grand));
  if (ms_between <= 1e-24 * scale * scale) {
    r.f_statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  if (ms_within <= 0.0) {
    r.f_statistic = std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    r.infinite_f = true;
    return r;
  }
  r.f_statistic = ms_between / ms_within;
  r.p_value = f_survival(r.f_statistic, static_cast<double>(r.df_between), static_cast<double>(r.df_within));
  return r;
}

inline GroupSummary summarize(std::span<const double> values) {
  GroupSummary g;
  g.n = values.size();
  if (g.n == 0) return g;
  g.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(g.n);
  if (g.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - g.mean) * (v - g.mean);
    g.sd = std::sqrt(ss / static_cast<double>(g.n - 1));
  }
  return g;
}

/// One-way ANOVA on raw observations.
inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& samples) {
  std::vector<GroupSummary> groups;
  for (const auto& s : samples) groups.push_back(summarize(s));
  return anova_oneway(groups);
}

// ---------------------------------------------------------------------------
// Participant splitting

struct ParticipantRecord {
  std::string id;
  int uems = 0;  // upper extremity motor subscore, 0..50
  std::size_t frames = 0;
};

struct ParticipantSplit {
  // Member ids per group, each group sorted by id; groups ordered by their
  // first member.
  std::vector<std::vector<std::string>> groups;
  std::vector<double> group_mean_uems;
  double objective = 0.0;  // population variance of the group means
  std::optional<AnovaResult> anova;  // absent when some group has < 2 members
  bool exhaustive = false;
};

inline constexpr std::string_view kParticipantHeader = "id,uems,frames";

/// Parses `id,uems,frames` rows; errors name the 1-based line.
inline std::vector<ParticipantRecord> parse_participants(std::string_view csv) {
  const auto rows = text::lines(csv);
  if (rows.empty() || text::trim(rows[0]) != kParticipantHeader)
    throw ParseError("participant file must start with header '" + std::string(kParticipantHeader) + "'", 1);
  std::vector<ParticipantRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (text::trim(rows[i]).empty()) continue;
    const auto f = text::split(rows[i], ',');
    if (f.size() != 3) throw ParseError("expected 3 fields", i + 1);
    const auto id = text::trim(f[0]);
    const auto uems = text::parse_int(text::trim(f[1]));
    const auto frames = text::parse_int(text::trim(f[2]));
    if (id.empty()) throw ParseError("empty participant id", i + 1);
    if (!uems) throw ParseError("bad uems '" + std::string(f[1]) + "'", i + 1);
    if (!frames || *frames < 0) throw ParseError("bad frame count '" + std::string(f[2]) + "'", i + 1);
    out.push_back({std::string(id), static_cast<int>(*uems), static_cast<std::size_t>(*frames)});
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = i + 1; j < out.size(); ++j)
      if (out[i].id == out[j].id) throw ValidationError("duplicate participant id " + out[i].id);
  return out;
}

namespace detail {

inline double variance_of_means(std::span<const std::int64_t> sums, std::span<const std::size_t> counts) {
  const std::size_t g = sums.size();
  double mean_of_means = 0.0;
  std::vector<double> means(g);
  for (std::size_t i = 0; i < g; ++i) {
    means[i] = static_cast<double>(sums[i]) / static_cast<double>(counts[i]);
    mean_of_means += means[i];
  }
  mean_of_means /= static_cast<double>(g);
  double v = 0.0;
  for (double m : means) v += (m - mean_of_means) * (m - mean_of_means);
  return v / static_cast<double>(g);
}

// Number of unlabeled balanced partitions, saturating at `cap`.
inline double balanced_partition_count(std::size_t n, std::size_t groups) {
  // n! / (prod size_i!) / (multiplicity of equal sizes)!
  const std::size_t base = n / groups, extra = n % groups;
  double log_count = std::lgamma(n + 1.0);
  log_count -= static_cast<double>(extra) * std::lgamma(base + 2.0);
  log_count -= static_cast<double>(groups - extra) * std::lgamma(base + 1.0);
  log_count -= std::lgamma(extra + 1.0) + std::lgamma(groups - extra + 1.0);
  return std::exp(log_count);
}

class ExhaustiveSplitter {
 public:
  ExhaustiveSplitter(std::span<const int> uems, std::size_t groups)
      : uems_(uems), groups_(groups), base_(uems.size() / groups), extra_(uems.size() % groups),
        assign_(uems.size()), sums_(groups, 0), counts_(groups, 0) {}

  std::vector<std::size_t> run() {
    recurse(0, 0, 0);
    return best_assign_;
  }

 private:
  void recurse(std::size_t i, std::size_t used_groups, std::size_t large_groups) {
    if (i == uems_.size()) {
      const double v = variance_of_means(sums_, counts_);
      if (best_assign_.empty() || v < best_ - 1e-12) {
        best_ = v;
        best_assign_ = assign_;
      }
      return;
    }
    const std::size_t remaining = uems_.size() - i;
    // Later groups still need to be opened; there must be people left to fill them.
    for (std::size_t g = 0; g < std::min(used_groups + 1, groups_); ++g) {
      const bool opening = g == used_groups;
      if (opening && remaining < groups_ - used_groups) continue;
      bool becomes_large = false;
      if (counts_[g] == base_) {
        if (large_groups >= extra_) continue;
        becomes_large = true;
      } else if (counts_[g] > base_) {
        continue;
      }
      assign_[i] = g;
      sums_[g] += uems_[i];
      counts_[g] += 1;
      recurse(i + 1, opening ? used_groups + 1 : used_groups, large_groups + (becomes_large ? 1 : 0));
      counts_[g] -= 1;
      sums_[g] -= uems_[i];
    }
  }

  std::span<const int> uems_;
  std::size_t groups_;
  std::size_t base_;
  std::size_t extra_;
  std::vector<std::size_t> assign_;
  std::vector<std::int64_t> sums_;
  std::vector<std::size_t> counts_;
  double best_ = 0.0;
  std::vector<std::size_t> best_assign_;
};

// Snake draft by descending UEMS, then pairwise swaps while they help.
inline std::vector<std::size_t> greedy_split(std::span<const int> uems, std::size_t groups) {
  const std::size_t n = uems.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return uems[a] > uems[b]; });
  std::vector<std::size_t> assign(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t round = k / groups, pos = k % groups;
    assign[order[k]] = round % 2 == 0 ? pos : groups - 1 - pos;
  }
  std::vector<std::int64_t> sums(groups, 0);
  std::vector<std::size_t> counts(groups, 0);
  for (std::size_t i = 0; i < n; ++i) {
    sums[assign[i]] += uems[i];
    counts[assign[i]] += 1;
  }
  double current = variance_of_means(sums, counts);
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const std::size_t gi = assign[i], gj = assign[j];
        if (gi == gj || uems[i] == uems[j]) continue;
        sums[gi] += uems[j] - uems[i];
        sums[gj] += uems[i] - uems[j];
        const double v = variance_of_means(sums, counts);
        if (v < current - 1e-12) {
          current = v;
          std::swap(assign[i], assign[j]);
          improved = true;
        } else {
          sums[gi] -= uems[j] - uems[i];
          sums[gj] -= uems[i] - uems[j];
        }
      }
  }
  return assign;
}

}  // namespace detail

// Exhaustive search is used up to this many participants, provided the
// partition count stays below kMaxExhaustivePartitions.
inline constexpr std::size_t kMaxExhaustiveParticipants = 18;
inline constexpr double kMaxExhaustivePartitions = 2e7;

/// Splits participants into `groups` groups whose sizes differ by at most
/// one, minimizing the variance of the group mean UEMS. Input is ordered by
/// id first; among equally good partitions the lexicographically first
/// assignment in that order wins.
inline ParticipantSplit split_participants(std::vector<ParticipantRecord> records, std::size_t groups) {
  if (groups < 1) throw ValidationError("need at least one group");
  if (records.size() < groups)
    throw ValidationError("cannot split " + std::to_string(records.size()) + " participants into " +
                          std::to_string(groups) + " groups");
  for (const auto& r : records)
    if (r.uems < 0 || r.uems > 50) throw ValidationError("UEMS for " + r.id + " outside [0, 50]");
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  std::vector<int> uems;
  for (const auto& r : records) uems.push_back(r.uems);

  ParticipantSplit split;
  std::vector<std::size_t> assign;
  if (records.size() <= kMaxExhaustiveParticipants &&
      detail::balanced_partition_count(records.size(), groups) <= kMaxExhaustivePartitions) {
    assign = detail::ExhaustiveSplitter(uems, groups).run();
    split.exhaustive = true;
  } else {
    assign = detail::greedy_split(uems, groups);
  }

  // Relabel groups by first appearance so the output is canonical.
  std::vector<std::size_t> relabel(groups, groups);
  std::size_t next = 0;
  for (auto g : assign)
    if (relabel[g] == groups) relabel[g] = next++;
  split.groups.assign(groups, {});
  std::vector<std::vector<double>> samples(groups);
  std::vector<std::int64_t> sums(groups, 0);
  std::vector<std::size_t> counts(groups, 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t g = relabel[assign[i]];
    split.groups[g].push_back(records[i].id);
    samples[g].push_back(records[i].uems);
    sums[g] += records[i].uems;
    counts[g] += 1;
  }
  for (std::size_t g = 0; g < groups; ++g)
    split.group_mean_uems.push_back(static_cast<double>(sums[g]) / static_cast<double>(counts[g]));
  split.objective = detail::variance_of_means(sums, counts);
  const bool anova_ok = groups >= 2 && std::all_of(counts.begin(), counts.end(), [](auto c) { return c >= 2; });
  if (anova_ok) split.anova = anova_oneway(samples);
  return split;
}

}  // namespace datkit

#include "loralab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace loralab {

double AccuracyMatrix::at(int i, int j) const {
  if (i < 1 || i > tasks() || j < 1 || j > i)
    throw ContractViolation("AccuracyMatrix: index outside lower triangle");
  return rows[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
}

void AccuracyMatrix::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != i + 1)
      throw ContractViolation("AccuracyMatrix: row " + std::to_string(i + 1) +
                              " must have " + std::to_string(i + 1) + " entries");
    for (double a : rows[i])
      if (!(a >= 0.0 && a <= 1.0))
        throw ContractViolation("AccuracyMatrix: entry outside [0,1]");
  }
}

AccuracySummary summarize(const AccuracyMatrix& acc) {
  acc.validate();
  if (acc.tasks() == 0) throw ContractViolation("summarize: empty matrix");
  AccuracySummary out;
  for (int i = 1; i <= acc.tasks(); ++i) {
    double sum = 0.0;
    for (int j = 1; j <= i; ++j) sum += acc.at(i, j);
    out.a_i.push_back(sum / static_cast<double>(i));
  }
  out.a_last = out.a_i.back();
  double total = 0.0;
  for (double a : out.a_i) total += a;
  out.a_avg = total / static_cast<double>(acc.tasks());
  return out;
}

std::vector<double> forgetting(const std::vector<std::vector<double>>& errors) {
  std::vector<double> out;
  for (std::size_t t = 2; t <= errors.size(); ++t) {
    if (errors[t - 1].size() < t)
      throw ContractViolation("forgetting: missing checkpoint error for task " +
                              std::to_string(t));
    double sum = 0.0;
    for (std::size_t s = 1; s < t; ++s) {
      if (errors[s - 1].size() < s)
        throw ContractViolation("forgetting: missing diagonal error for task " +
                                std::to_string(s));
      sum += errors[t - 1][s - 1] - errors[s - 1][s - 1];
    }
    out.push_back(sum / static_cast<double>(t - 1));
  }
  return out;
}

std::vector<double> forgetting(const AccuracyMatrix& acc) {
  std::vector<std::vector<double>> errors;
  for (const auto& row : acc.rows) {
    std::vector<double> err_row;
    for (double a : row) err_row.push_back(1.0 - a);
    errors.push_back(std::move(err_row));
  }
  return forgetting(errors);
}

double margin(const ActivationTrace& trace, int label, const std::map<int, Vector>& heads) {
  if (heads.size() < 2) throw ContractViolation("margin: need at least two classes");
  auto label_it = heads.find(label);
  if (label_it == heads.end()) throw ContractViolation("margin: label has no head");
  const Vector& top = trace.z.back();
  double own = top.dot(label_it->second);
  double best_other = -std::numeric_limits<double>::infinity();
  for (const auto& [id, w] : heads) {
    if (id == label) continue;
    best_other = std::max(best_other, top.dot(w));
  }
  return own - best_other;
}

bool bound_holds(double lhs, double rhs) {
  return lhs <= rhs + 1e-6 * std::max(1.0, std::abs(rhs));
}

long BoundReport::total() const {
  long n = 0;
  for (const auto& r : records)
    if (!r.excluded) ++n;
  return n;
}

long BoundReport::held() const {
  long n = 0;
  for (const auto& r : records)
    if (!r.excluded && r.holds) ++n;
  return n;
}

long BoundReport::violated() const { return total() - held(); }

long BoundReport::excluded() const {
  long n = 0;
  for (const auto& r : records)
    if (r.excluded) ++n;
  return n;
}

std::string BoundReport::to_text() const {
  std::ostringstream out;
  for (const auto& r : records) {
    out << r.name << " s=" << r.s << " t=" << r.t << " lhs=" << format_real(r.lhs)
        << " rhs=" << format_real(r.rhs);
    if (r.excluded)
      out << " excluded(" << r.reason << ")";
    else
      out << (r.holds ? " holds" : " VIOLATED");
    out << " samples=" << r.samples << "\n";
  }
  out << "# total=" << total() << " held=" << held() << " violated=" << violated()
      << " excluded=" << excluded() << "\n";
  return out.str();
}

double head_stack_spectral_norm(const std::map<int, Vector>& heads) {
  if (heads.empty()) throw ContractViolation("head_stack_spectral_norm: no heads");
  const Index d = heads.begin()->second.size();
  Matrix gram = Matrix::Zero(d, d);
  for (const auto& [id, w] : heads) gram.noalias() += w * w.transpose();
  Vector values = eigh_sym(gram).values;
  return std::sqrt(std::max(0.0, values[0]));
}

PairMeasurement measure_pair(const Backbone& cp_s, const Backbone& cp_t, int s, int t,
                             const TaskData& task_s) {
  PairMeasurement m;
  m.s = s;
  m.t = t;
  m.samples = static_cast<long>(task_s.test.size());

  std::vector<int> classes_s = cp_s.known_classes();
  std::vector<int> classes_t = cp_t.known_classes();
  const Index layers = cp_s.config().layers;
  std::vector<int> all_layers;
  for (Index l = 1; l <= layers; ++l) all_layers.push_back(static_cast<int>(l));

  long wrong_s = 0, wrong_t = 0;
  double drop_sum = 0.0;
  double gamma_min = std::numeric_limits<double>::infinity();

  auto worst_init = [&](BoundRecord& r, const char* name) {
    r.name = name;
    r.s = s;
    r.t = t;
    r.lhs = 0.0;
    r.rhs = 0.0;
    r.holds = true;
    r.samples = m.samples;
  };
  worst_init(m.lemma2, "lemma2_margin_drop");
  worst_init(m.lemma3, "lemma3_cross_term");
  worst_init(m.weyl, "weyl_relation_pair");
  bool have_lemma2 = false, have_lemma3 = false, have_weyl = false;

  for (const Sample& sample : task_s.test) {
    ActivationTrace trace_s = cp_s.forward(sample.x, s, classes_s);
    ActivationTrace trace_t = cp_t.forward(sample.x, t, classes_t);

    bool correct_s = predicted_class(trace_s) == sample.label;
    bool correct_t = predicted_class(trace_t) == sample.label;
    if (!correct_s) ++wrong_s;
    if (!correct_t) ++wrong_t;

    double margin_s = margin(trace_s, sample.label, cp_s.heads());
    double margin_t = margin(trace_t, sample.label, cp_t.heads());
    double drop = margin_s - margin_t;
    drop_sum += drop;
    if (correct_s) {
      ++m.correct_under_s;
      gamma_min = std::min(gamma_min, margin_s);
    }

    // Residual deviations and the expansion identity.
    std::vector<Vector> dh;
    Vector sum_dh = Vector::Zero(cp_s.config().width);
    double sum_sq = 0.0;
    for (Index l = 1; l <= layers; ++l) {
      Vector delta = trace_t.h[static_cast<std::size_t>(l)] - trace_s.h[static_cast<std::size_t>(l)];
      sum_sq += delta.squaredNorm();
      sum_dh += delta;
      dh.push_back(std::move(delta));
    }
    double cross = 0.0, abs_cross = 0.0;
    for (std::size_t a = 0; a < dh.size(); ++a) {
      for (std::size_t b = a + 1; b < dh.size(); ++b) {
        double ip = dh[a].dot(dh[b]);
        cross += ip;
        abs_cross += std::abs(ip);
      }
    }
    double lhs_sq = sum_dh.squaredNorm();
    double identity_err =
        std::abs(lhs_sq - (sum_sq + 2.0 * cross)) / std::max(1.0, std::abs(lhs_sq));
    m.max_residual_identity_error = std::max(m.max_residual_identity_error, identity_err);
    m.sum_dh_sq.push_back(sum_sq);
    m.norm_sum_dh.push_back(sum_dh.norm());

    // Lemma 2: margin drop vs ||w_y - w_{k*}|| ||sum dh||, k* under W_t.
    {
      double best = -std::numeric_limits<double>::infinity();
      int k_star = -1;
      for (std::size_t i = 0; i < trace_t.classes.size(); ++i) {
        if (trace_t.classes[i] == sample.label) continue;
        if (trace_t.logits[static_cast<Index>(i)] > best) {
          best = trace_t.logits[static_cast<Index>(i)];
          k_star = trace_t.classes[i];
        }
      }
      double head_gap = (cp_t.heads().at(sample.label) - cp_t.heads().at(k_star)).norm();
      double rhs = head_gap * sum_dh.norm();
      if (!have_lemma2 || drop - rhs > m.lemma2.lhs - m.lemma2.rhs) {
        m.lemma2.lhs = drop;
        m.lemma2.rhs = rhs;
        have_lemma2 = true;
      }
    }

    // Relation matrices with the raw inner product (theory setting).
    RelationMatrix r_ss = relation_matrix(trace_s, Phi::inner, all_layers);
    RelationMatrix r_st = relation_matrix(trace_t, Phi::inner, all_layers);
    Vector eig_ss = eigh_sym(r_ss.entries).values;
    double lambda_min = eig_ss[eig_ss.size() - 1];
    double drift_sq = (r_st.entries - r_ss.entries).squaredNorm();
    m.lambda_min_rss.push_back(lambda_min);
    m.drift_sq.push_back(drift_sq);

    if (lambda_min < kLambdaMinFloor) {
      ++m.lemma3_excluded;
    } else {
      double rhs = 8.0 * static_cast<double>(layers - 1) / lambda_min * drift_sq;
      if (!have_lemma3 || abs_cross - rhs > m.lemma3.lhs - m.lemma3.rhs) {
        m.lemma3.lhs = abs_cross;
        m.lemma3.rhs = rhs;
        have_lemma3 = true;
      }
    }

    WeylReport w = weyl_check(r_ss.entries, r_st.entries - r_ss.entries);
    if (!have_weyl || w.max_shift - w.e_norm > m.weyl.lhs - m.weyl.rhs) {
      m.weyl.lhs = w.max_shift;
      m.weyl.rhs = w.e_norm;
      have_weyl = true;
    }
  }

  double n = static_cast<double>(m.samples);
  m.err_s = static_cast<double>(wrong_s) / n;
  m.err_t = static_cast<double>(wrong_t) / n;
  m.mean_margin_drop = drop_sum / n;
  m.gamma_min = m.correct_under_s > 0 ? gamma_min : std::numeric_limits<double>::quiet_NaN();

  m.lemma2.holds = bound_holds(m.lemma2.lhs, m.lemma2.rhs);
  if (have_lemma3) {
    m.lemma3.holds = bound_holds(m.lemma3.lhs, m.lemma3.rhs);
  } else {
    m.lemma3.excluded = true;
    m.lemma3.reason = "lambda_min below " + format_real(kLambdaMinFloor) + " for all samples";
  }
  m.weyl.holds = m.weyl.lhs <= m.weyl.rhs + 1e-9;
  return m;
}

BoundReport theory_report(const std::vector<Backbone>& checkpoints,
                          const std::vector<TaskData>& tasks) {
  if (checkpoints.size() != tasks.size() || checkpoints.empty())
    throw ContractViolation("theory_report: need one checkpoint per task");
  const int T = static_cast<int>(checkpoints.size());
  const Index layers = checkpoints.front().config().layers;

  BoundReport report;
  // pair measurements keyed by (s, t)
  std::map<std::pair<int, int>, PairMeasurement> pairs;
  for (int t = 2; t <= T; ++t)
    for (int s = 1; s < t; ++s)
      pairs.emplace(std::make_pair(s, t),
                    measure_pair(checkpoints[static_cast<std::size_t>(s - 1)],
                                 checkpoints[static_cast<std::size_t>(t - 1)], s, t,
                                 tasks[static_cast<std::size_t>(s - 1)]));

  for (auto& [key, m] : pairs) {
    BoundRecord lemma1;
    lemma1.name = "lemma1_error_vs_margin";
    lemma1.s = m.s;
    lemma1.t = m.t;
    lemma1.samples = m.samples;
    if (m.correct_under_s == 0) {
      lemma1.excluded = true;
      lemma1.reason = "gamma_min undefined (no correctly classified samples)";
    } else if (m.gamma_min <= 1e-12) {
      lemma1.excluded = true;
      lemma1.reason = "gamma_min ~ 0";
    } else {
      lemma1.lhs = m.err_t - m.err_s;
      lemma1.rhs = m.mean_margin_drop / m.gamma_min;
      lemma1.holds = bound_holds(lemma1.lhs, lemma1.rhs);
    }
    report.records.push_back(lemma1);
    report.records.push_back(m.lemma2);
    report.records.push_back(m.lemma3);

    BoundRecord identity;
    identity.name = "residual_expansion_identity";
    identity.s = m.s;
    identity.t = m.t;
    identity.lhs = m.max_residual_identity_error;
    identity.rhs = 1e-8;
    identity.holds = bound_holds(identity.lhs, identity.rhs);
    identity.samples = m.samples;
    report.records.push_back(identity);
    report.records.push_back(m.weyl);
  }

  for (int t = 2; t <= T; ++t) {
    double f_t = 0.0;
    double bound1 = 0.0, bound2 = 0.0;
    bool usable1 = true, usable2 = true;
    std::string reason;
    long excluded_samples = 0;
    for (int s = 1; s < t; ++s) {
      const PairMeasurement& m = pairs.at({s, t});
      f_t += m.err_t - m.err_s;
      if (m.correct_under_s == 0 || m.gamma_min <= 1e-12) {
        usable1 = usable2 = false;
        reason = "gamma_min undefined for task " + std::to_string(s);
        continue;
      }
      double mean_norm = 0.0;
      for (double v : m.norm_sum_dh) mean_norm += v;
      mean_norm /= static_cast<double>(m.samples);
      bound1 += mean_norm / m.gamma_min;

      double mean_relation = 0.0;
      long included = 0;
      for (std::size_t i = 0; i < m.lambda_min_rss.size(); ++i) {
        if (m.lambda_min_rss[i] < kLambdaMinFloor) {
          ++excluded_samples;
          continue;
        }
        mean_relation += std::sqrt(m.sum_dh_sq[i] + 16.0 * static_cast<double>(layers - 1) /
                                                        m.lambda_min_rss[i] * m.drift_sq[i]);
        ++included;
      }
      if (included == 0) {
        usable2 = false;
        reason = "lambda_min below floor for every sample of task " + std::to_string(s);
        continue;
      }
      mean_relation /= static_cast<double>(included);
      bound2 += mean_relation / m.gamma_min;
    }
    f_t /= static_cast<double>(t - 1);
    double head_norm =
        head_stack_spectral_norm(checkpoints[static_cast<std::size_t>(t - 1)].heads());

    BoundRecord theorem1;
    theorem1.name = "theorem1_forgetting_residual";
    theorem1.t = t;
    if (!usable1) {
      theorem1.excluded = true;
      theorem1.reason = reason;
    } else {
      theorem1.lhs = f_t;
      theorem1.rhs = head_norm / static_cast<double>(t - 1) * bound1;
      theorem1.holds = bound_holds(theorem1.lhs, theorem1.rhs);
    }
    report.records.push_back(theorem1);

    BoundRecord theorem2;
    theorem2.name = "theorem2_forgetting_relation";
    theorem2.t = t;
    theorem2.samples = excluded_samples;
    if (!usable2) {
      theorem2.excluded = true;
      theorem2.reason = reason;
    } else {
      theorem2.lhs = f_t;
      theorem2.rhs = head_norm / static_cast<double>(t - 1) * bound2;
      theorem2.holds = bound_holds(theorem2.lhs, theorem2.rhs);
    }
    report.records.push_back(theorem2);
  }
  return report;
}

}  // namespace loralab

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "stacknov/classifier.hpp"

namespace stacknov {

struct NoveltyConfig {
  double threshold = 25.0;      // T; must exceed 1
  double z_threshold = 3.0;
  int batch_episodes = 10;      // episodes per detection batch

  // The score's source text is self-contradictory: its displayed formula
  // divides by the known-outlier rho sum, its prose multiplies by it. Only
  // the prose reading produces scores on the threshold's scale (dividing
  // leaves every achievable score orders of magnitude below T), so the
  // prose reading is the default and the division is kept for comparison.
  bool divide_by_known_sum = false;

  void validate() const {
    if (threshold <= 1.0)
      throw std::invalid_argument("NoveltyConfig: threshold must exceed 1");
  }
};

inline double cosdist(const Vector& a, const Vector& b) {
  double na = a.norm(), nb = b.norm();
  if (na < 1e-300 || nb < 1e-300)
    throw std::invalid_argument("cosdist: zero-norm vector");
  return 1.0 - a.dot(b) / (na * nb);
}

// Known-class embedding statistics: mean, per-dimension stddev, and the
// reference distance that normalizes every rho.
//
// The reference distance treats the class spread as a single scalar: the RMS
// of the per-dimension stddevs, added uniformly to every coordinate of the
// mean. Embeddings here are ReLU activations, so per-dimension spread is
// roughly proportional to the mean profile; cosdist(mu, mu + sigma) with the
// raw per-dimension sigma would then collapse toward zero for exactly the
// classes with the cleanest structure, inflating every score against them.
// The scalar spread keeps the reference direction well defined, preserves
// scale invariance (the RMS scales with the embeddings), and makes the
// reference distance comparable across classes.
struct ClassEmbeddingSummary {
  Vector mu, sigma;
  double ref_distance = 0.0;

  static ClassEmbeddingSummary from(const Matrix& embeddings) {
    if (embeddings.rows() < 2)
      throw std::invalid_argument("ClassEmbeddingSummary: need >= 2 samples");
    ClassEmbeddingSummary s;
    s.mu = embeddings.colwise().mean().transpose();
    Matrix centered = embeddings.rowwise() - s.mu.transpose();
    s.sigma = (centered.array().square().colwise().sum() /
               static_cast<double>(embeddings.rows()))
                  .sqrt()
                  .transpose()
                  .matrix();
    double spread = std::sqrt(s.sigma.squaredNorm() /
                              static_cast<double>(s.sigma.size()));
    s.ref_distance =
        cosdist(s.mu, s.mu + Vector::Constant(s.mu.size(), spread));
    if (s.ref_distance < 1e-12)
      throw std::runtime_error(
          "ClassEmbeddingSummary: degenerate class (reference distance ~ 0)");
    return s;
  }
};

inline double rho(const Vector& v, const ClassEmbeddingSummary& s) {
  return cosdist(s.mu, v) / s.ref_distance;
}

// Z-score filter over one set's outlier rho values; sigma = 0 removes nothing.
inline std::vector<double> filter_outliers(const std::vector<double>& rhos,
                                           double z_threshold = 3.0) {
  if (rhos.empty()) return {};
  double mean = 0.0;
  for (double r : rhos) mean += r;
  mean /= static_cast<double>(rhos.size());
  double var = 0.0;
  for (double r : rhos) var += (r - mean) * (r - mean);
  double sd = std::sqrt(var / static_cast<double>(rhos.size()));
  if (sd < 1e-300) return rhos;
  std::vector<double> out;
  for (double r : rhos)
    if ((r - mean) / sd < z_threshold) out.push_back(r);
  return out;
}

struct NoveltyReport {
  std::string predicted_class;
  std::vector<double> rho_new, rho_known;        // all rho values
  std::vector<double> outliers_new, outliers_known;     // rho > 1, post-filter
  double sum_new = 0.0, sum_known = 0.0;
  double outlier_ratio = 0.0;
  double mean_distance = 0.0;                    // cosdist(mu_S, mu_N)
  double ref_distance = 0.0;
  double score = 0.0;
  bool novel = false;
  bool degenerate_known_outliers = false;        // O_S empty, floor applied
  std::string tie_break;                         // how the vote was settled

  nlohmann::json to_json() const {
    return {{"predicted_class", predicted_class},
            {"rho_new", rho_new},
            {"rho_known", rho_known},
            {"outliers_new", outliers_new},
            {"outliers_known", outliers_known},
            {"sum_new", sum_new},
            {"sum_known", sum_known},
            {"outlier_ratio", outlier_ratio},
            {"mean_distance", mean_distance},
            {"ref_distance", ref_distance},
            {"score", score},
            {"verdict", novel ? "novel" : "known"},
            {"degenerate_known_outliers", degenerate_known_outliers},
            {"tie_break", tie_break}};
  }
};

// The outlier-ratio test: N = new-batch embeddings (rows), S = embeddings of
// the predicted class's reference episodes.
inline NoveltyReport novelty_score(const Matrix& new_batch,
                                   const ClassEmbeddingSummary& summary,
                                   const Matrix& known_samples,
                                   const NoveltyConfig& cfg) {
  cfg.validate();
  if (new_batch.rows() == 0)
    throw std::invalid_argument("novelty_score: empty new batch");
  if (known_samples.rows() == 0)
    throw std::invalid_argument("novelty_score: empty known sample set");

  NoveltyReport rep;
  rep.ref_distance = summary.ref_distance;

  auto rhos_of = [&](const Matrix& m) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      out.push_back(rho(m.row(i).transpose(), summary));
    return out;
  };
  rep.rho_new = rhos_of(new_batch);
  rep.rho_known = rhos_of(known_samples);

  auto outliers_of = [&](const std::vector<double>& rhos) {
    std::vector<double> raw;
    for (double r : rhos)
      if (r > 1.0) raw.push_back(r);
    return filter_outliers(raw, cfg.z_threshold);
  };
  rep.outliers_new = outliers_of(rep.rho_new);
  rep.outliers_known = outliers_of(rep.rho_known);

  for (double r : rep.outliers_new) rep.sum_new += r;
  for (double r : rep.outliers_known) rep.sum_known += r;
  if (rep.outliers_known.empty()) {
    rep.degenerate_known_outliers = true;
    rep.sum_known = 1.0;
  }
  rep.outlier_ratio = rep.sum_new / rep.sum_known;

  Vector mu_n = new_batch.colwise().mean().transpose();
  rep.mean_distance = cosdist(summary.mu, mu_n);

  rep.score = rep.outlier_ratio * rep.mean_distance / rep.ref_distance;
  if (cfg.divide_by_known_sum)
    rep.score /= rep.sum_known;
  else
    rep.score *= rep.sum_known;
  rep.novel = rep.score > cfg.threshold;
  return rep;
}

// Full detection step: majority vote over the batch picks the most similar
// known class, then the outlier-ratio test runs against that class's
// reference-episode embeddings. Reference episodes should come from data the
// classifier never trained on (the detection pool): statistics taken on the
// training split itself understate the class spread the detector will see at
// test time, which inflates every score and breaks known-class calibration.
inline NoveltyReport detect(ClassifierModel& model,
                            const std::vector<EpisodeTensor>& batch,
                            const std::vector<EpisodeTensor>& reference_episodes,
                            const NoveltyConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("detect: empty batch");
  EmbeddingBatch eb = embed(model, batch, "detection-batch");

  // Majority vote; ties by mean softmax probability, then class order.
  std::map<ObjectKind, int> votes;
  for (ObjectKind k : eb.predicted_labels) ++votes[k];
  int best = 0;
  for (const auto& [k, n] : votes) best = std::max(best, n);
  std::vector<ObjectKind> tied;
  for (const auto& [k, n] : votes)
    if (n == best) tied.push_back(k);

  ObjectKind predicted = tied.front();
  std::string tie_break = "none";
  if (tied.size() > 1) {
    Vector mean_p = Vector::Zero(static_cast<Eigen::Index>(model.classes.size()));
    for (const auto& ep : batch) mean_p += predict(model, ep).probabilities;
    mean_p /= static_cast<double>(batch.size());
    double best_p = -1.0;
    bool still_tied = false;
    for (ObjectKind k : tied) {
      double p = mean_p[model.class_index(k)];
      if (p > best_p + 1e-12) {
        best_p = p;
        predicted = k;
        still_tied = false;
      } else if (std::abs(p - best_p) <= 1e-12) {
        still_tied = true;
      }
    }
    tie_break = still_tied ? "lexicographic" : "mean-probability";
    if (still_tied) {
      std::vector<std::string> names;
      for (ObjectKind k : tied) names.push_back(kind_name(k));
      std::sort(names.begin(), names.end());
      predicted = kind_from_name(names.front());
    }
  }

  std::vector<EpisodeTensor> class_ref;
  for (const auto& ep : reference_episodes)
    if (ep.label == predicted) class_ref.push_back(ep);
  if (class_ref.empty())
    throw std::invalid_argument("detect: no reference episodes for class " +
                                kind_name(predicted));
  EmbeddingBatch known = embed(model, class_ref, "class-reference");

  NoveltyReport rep = novelty_score(
      eb.embeddings, ClassEmbeddingSummary::from(known.embeddings),
      known.embeddings, cfg);
  rep.predicted_class = kind_name(predicted);
  rep.tie_break = tie_break;
  return rep;
}

}  // namespace stacknov

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "stacknov/adam.hpp"
#include "stacknov/nn.hpp"
#include "stacknov/records.hpp"

namespace stacknov {

struct ClassifierConfig {
  int epochs = 500;
  int batch_episodes = 10;     // batch = 10 episodes = 100 timestep rows
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int episodes_per_class = kTrainEpisodes;

  // Gaussian noise added to standardized inputs during training only. With
  // clean inputs the network memorizes the training episodes exactly, so
  // their embeddings collapse far tighter than held-out episodes of the same
  // class ever land — which miscalibrates any outlier test that measures
  // class spread on training embeddings. Noise forces the network to map a
  // neighborhood of each episode consistently, keeping training-set spread
  // representative of held-out spread.
  double input_noise = 0.1;

  // Dropout rate on fc1's activations, active during training only. Without
  // it the 64 embedding units specialize into a few per-class directions, so
  // a class's per-dimension deviations end up proportional to its mean and
  // the reference distance cosdist(mu, mu+sigma) collapses far below the
  // typical in-class cosine distance — miscalibrating the outlier test.
  // Dropout forces evidence to spread across units, keeping per-unit
  // variability independent of the mean profile.
  double dropout = 0.2;

  // Label smoothing keeps the optimal logits finite, so late training cannot
  // keep stretching each class's activations along its own mean direction —
  // the failure mode that collapses the embedding-space reference distance.
  double label_smoothing = 0.05;

  // Conv1 filter width stays at one full (unablated) timestep even for the
  // ablated 16-feature schema; that is the only width for which the layer
  // output lengths come out as 22/10 (c=19) and 18/8 (c=16).
  int conv1_kernel = kFeatureCount;
  int conv1_filters = 256;
  int conv1_stride = 8;
  int conv2_filters = 128;
  int conv2_kernel = 4;
  int conv2_stride = 2;
  int fc_units = 64;
};

constexpr int kEmbeddingDim = 64;

// Trained CNN over flattened padded episodes. Inputs are standardized
// per feature column with training-set statistics carried in the model.
struct ClassifierModel {
  Net net;
  std::vector<ObjectKind> classes;       // softmax output order
  int feature_count = 0;                 // c: 19 full / 16 ablated
  Vector col_mean, col_std;              // per-feature standardization
  std::vector<double> loss_history;      // mean cross-entropy per epoch
  ClassifierConfig config;

  int class_index(ObjectKind k) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == k) return static_cast<int>(i);
    return -1;
  }
};

struct EmbeddingBatch {
  Matrix embeddings;                     // batch x 64
  std::vector<ObjectKind> true_labels;
  std::vector<ObjectKind> predicted_labels;
  std::string provenance;
};

namespace detail {

inline Dropout* build_classifier_net(Net& net, int c, int n_classes,
                                     const ClassifierConfig& cfg) {
  int len1 = kEpisodeLen * c;
  int len2 = Conv1d::out_length(len1, cfg.conv1_kernel, cfg.conv1_stride);
  int len3 = Conv1d::out_length(len2, cfg.conv2_kernel, cfg.conv2_stride);
  net.add<Conv1d>(1, cfg.conv1_filters, cfg.conv1_kernel, cfg.conv1_stride);
  net.add<ReLU>();
  net.add<Conv1d>(cfg.conv1_filters, cfg.conv2_filters, cfg.conv2_kernel,
                  cfg.conv2_stride);
  net.add<ReLU>();
  net.add<Dense>(cfg.conv2_filters * len3, cfg.fc_units);
  net.add<ReLU>();
  Dropout* drop = net.add<Dropout>(cfg.dropout);
  net.add<Dense>(cfg.fc_units, cfg.fc_units);
  net.add<ReLU>();
  net.add<Dense>(cfg.fc_units, n_classes);
  return drop;
}

// Embeddings are fc2's post-ReLU activations: the last hidden representation
// before the softmax head. The dropout layer is inert outside training, so
// the prefix forward is deterministic.
constexpr std::size_t kEmbeddingPrefixLayers = 9;  // fc2 activations

inline void check_schema(const ClassifierModel& model,
                         const EpisodeTensor& ep) {
  if (ep.feature_count() != model.feature_count)
    throw std::invalid_argument(
        "classifier: episode has " + std::to_string(ep.feature_count()) +
        " features, model expects " + std::to_string(model.feature_count));
}

// Standardize and flatten timestep-major: one row of length 10*c.
inline Matrix flatten(const ClassifierModel& model,
                      const std::vector<const EpisodeTensor*>& eps) {
  const int c = model.feature_count;
  Matrix x(static_cast<Eigen::Index>(eps.size()), kEpisodeLen * c);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    check_schema(model, *eps[i]);
    for (int t = 0; t < kEpisodeLen; ++t)
      for (int f = 0; f < c; ++f)
        x(static_cast<Eigen::Index>(i), t * c + f) =
            (eps[i]->rows(t, f) - model.col_mean[f]) / model.col_std[f];
  }
  return x;
}

}  // namespace detail

inline ClassifierModel train_classifier(
    const std::vector<EpisodeTensor>& episodes, const ClassifierConfig& cfg) {
  if (episodes.empty())
    throw std::invalid_argument("train_classifier: no episodes");
  const int c = episodes.front().feature_count();

  std::map<ObjectKind, int> counts;
  for (const auto& ep : episodes) {
    if (ep.feature_count() != c)
      throw std::invalid_argument("train_classifier: mixed feature schemas");
    ++counts[ep.label];
  }
  for (const auto& [kind, n] : counts)
    if (n != cfg.episodes_per_class)
      throw std::invalid_argument(
          "train_classifier: class " + kind_name(kind) + " has " +
          std::to_string(n) + " episodes, expected " +
          std::to_string(cfg.episodes_per_class));
  if (counts.size() < 2)
    throw std::invalid_argument("train_classifier: need at least two classes");

  ClassifierModel model;
  model.feature_count = c;
  model.config = cfg;
  for (const auto& [kind, n] : counts) model.classes.push_back(kind);

  // Per-column standardization from the training set; constant columns get
  // a unit divisor so they map to zero rather than NaN.
  model.col_mean = Vector::Zero(c);
  model.col_std = Vector::Zero(c);
  const double total_rows =
      static_cast<double>(episodes.size()) * kEpisodeLen;
  for (const auto& ep : episodes)
    model.col_mean += ep.rows.colwise().sum().transpose();
  model.col_mean /= total_rows;
  for (const auto& ep : episodes)
    model.col_std +=
        (ep.rows.rowwise() - model.col_mean.transpose()).array().square()
            .colwise().sum().matrix().transpose();
  model.col_std = (model.col_std / total_rows).array().sqrt();
  for (int f = 0; f < c; ++f)
    if (model.col_std[f] < 1e-12) model.col_std[f] = 1.0;

  Dropout* drop = detail::build_classifier_net(
      model.net, c, static_cast<int>(model.classes.size()), cfg);
  Rng rng(cfg.seed ^ 0x636c6673ull);
  model.net.init(rng);
  drop->arm(&rng);
  AdamOptimizer opt(model.net.params(), cfg.lr);

  std::vector<int> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels(episodes.size());
  for (std::size_t i = 0; i < episodes.size(); ++i)
    labels[i] = model.class_index(episodes[i].label);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(cfg.batch_episodes)) {
      std::size_t end = std::min(
          order.size(), at + static_cast<std::size_t>(cfg.batch_episodes));
      std::vector<const EpisodeTensor*> batch;
      std::vector<int> y;
      for (std::size_t i = at; i < end; ++i) {
        batch.push_back(&episodes[static_cast<std::size_t>(order[i])]);
        y.push_back(labels[static_cast<std::size_t>(order[i])]);
      }
      Matrix x = detail::flatten(model, batch);
      if (cfg.input_noise > 0)
        for (Eigen::Index r = 0; r < x.rows(); ++r)
          for (Eigen::Index col = 0; col < x.cols(); ++col)
            x(r, col) += rng.normal(0, cfg.input_noise);
      Matrix logits = model.net.forward(x);
      LossResult loss = cross_entropy(logits, y, cfg.label_smoothing);
      if (!std::isfinite(loss.loss))
        throw std::runtime_error("train_classifier: non-finite loss at epoch " +
                                 std::to_string(epoch));
      model.net.backward(loss.grad);
      opt.step();
      epoch_loss += loss.loss;
      ++batches;
    }
    model.loss_history.push_back(epoch_loss / batches);
  }
  drop->disarm();
  return model;
}

struct Prediction {
  ObjectKind label;
  Vector probabilities;   // softmax over model.classes order
};

inline Prediction predict(ClassifierModel& model, const EpisodeTensor& ep) {
  Matrix logits = model.net.forward(detail::flatten(model, {&ep}));
  Matrix p = softmax(logits);
  Eigen::Index best;
  p.row(0).maxCoeff(&best);
  return {model.classes[static_cast<std::size_t>(best)],
          p.row(0).transpose()};
}

inline EmbeddingBatch embed(ClassifierModel& model,
                            const std::vector<EpisodeTensor>& episodes,
                            const std::string& provenance = "") {
  if (episodes.empty()) throw std::invalid_argument("embed: no episodes");
  std::vector<const EpisodeTensor*> ptrs;
  for (const auto& ep : episodes) ptrs.push_back(&ep);
  Matrix x = detail::flatten(model, ptrs);

  EmbeddingBatch out;
  out.embeddings =
      model.net.forward_prefix(x, detail::kEmbeddingPrefixLayers);
  out.provenance = provenance;
  Matrix logits = model.net.forward(x);
  Matrix p = softmax(logits);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best;
    p.row(i).maxCoeff(&best);
    out.true_labels.push_back(episodes[static_cast<std::size_t>(i)].label);
    out.predicted_labels.push_back(
        model.classes[static_cast<std::size_t>(best)]);
  }
  return out;
}

// counts(i, j) = episodes of true class i predicted as class j.
inline Eigen::MatrixXi confusion_matrix(
    ClassifierModel& model, const std::vector<EpisodeTensor>& episodes) {
  const int k = static_cast<int>(model.classes.size());
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(k, k);
  for (const auto& ep : episodes) {
    int t = model.class_index(ep.label);
    if (t < 0)
      throw std::invalid_argument("confusion_matrix: label " +
                                  kind_name(ep.label) +
                                  " is not a known class of this model");
    counts(t, model.class_index(predict(model, ep).label)) += 1;
  }
  return counts;
}

inline double accuracy(ClassifierModel& model,
                       const std::vector<EpisodeTensor>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("accuracy: no episodes");
  int hit = 0;
  for (const auto& ep : episodes)
    if (predict(model, ep).label == ep.label) ++hit;
  return static_cast<double>(hit) / static_cast<double>(episodes.size());
}

inline void save_classifier(const ClassifierModel& model,
                            const std::string& path) {
  nlohmann::json j;
  j["format"] = "stacknov-classifier";
  j["version"] = 1;
  j["feature_count"] = model.feature_count;
  for (ObjectKind k : model.classes) j["classes"].push_back(kind_name(k));
  j["col_mean"] = std::vector<double>(model.col_mean.begin(),
                                      model.col_mean.end());
  j["col_std"] = std::vector<double>(model.col_std.begin(),
                                     model.col_std.end());
  Vector flat = model.net.flat_params();
  j["params"] = std::vector<double>(flat.begin(), flat.end());
  j["loss_history"] = model.loss_history;
  j["epochs"] = model.config.epochs;
  j["seed"] = model.config.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_classifier: cannot open " + path);
  out << j.dump() << "\n";
}

inline ClassifierModel load_classifier(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_classifier: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "stacknov-classifier" || j.value("version", 0) != 1)
    throw std::runtime_error("load_classifier: unrecognized model file " + path);

  ClassifierModel model;
  model.feature_count = j.at("feature_count").get<int>();
  for (const auto& name : j.at("classes"))
    model.classes.push_back(kind_from_name(name.get<std::string>()));
  auto mean = j.at("col_mean").get<std::vector<double>>();
  auto std_ = j.at("col_std").get<std::vector<double>>();
  model.col_mean = Eigen::Map<const Vector>(mean.data(),
                                            static_cast<Eigen::Index>(mean.size()));
  model.col_std = Eigen::Map<const Vector>(std_.data(),
                                           static_cast<Eigen::Index>(std_.size()));
  model.loss_history = j.value("loss_history", std::vector<double>{});
  model.config.epochs = j.value("epochs", model.config.epochs);
  model.config.seed = j.value("seed", std::uint64_t{0});
  detail::build_classifier_net(model.net, model.feature_count,
                               static_cast<int>(model.classes.size()),
                               model.config);
  auto params = j.at("params").get<std::vector<double>>();
  model.net.set_flat_params(Eigen::Map<const Vector>(
      params.data(), static_cast<Eigen::Index>(params.size())));
  return model;
}

}  // namespace stacknov

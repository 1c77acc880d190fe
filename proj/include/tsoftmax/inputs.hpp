#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "tsoftmax/rng.hpp"

namespace tsoftmax {

enum class InputKind { isotropic, powerlaw_cov, replay };

struct Preprocessing {
  bool centered = false;
  bool whitened = false;
  double epsilon = 0.0;
};

/// Precomputed feature vectors, optionally labelled, stored as 32-bit floats.
struct FeatureDataset {
  using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Matrix features;
  std::optional<std::vector<int>> labels;
  int num_classes = 0;  // 0 when unlabelled
  Preprocessing preprocessing;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dimension() const { return features.cols(); }
  bool has_labels() const { return labels.has_value(); }
};

struct InputModel {
  InputKind kind = InputKind::isotropic;
  int N = 0;
  double beta = 0.0;
  double a = 10.0;
  std::shared_ptr<const FeatureDataset> dataset;

  static InputModel isotropic(int N) { return {InputKind::isotropic, N, 0.0, 10.0, nullptr}; }
  static InputModel powerlaw(int N, double beta, double a = 10.0) {
    return {InputKind::powerlaw_cov, N, beta, a, nullptr};
  }
  static InputModel replay(std::shared_ptr<const FeatureDataset> dataset);

  bool gaussian() const { return kind != InputKind::replay; }
  /// Per-coordinate input variances (ones for isotropic). Gaussian kinds only.
  Eigen::VectorXd variances() const;
  void validate() const;
};

/// lambda_i = (a / (a + i))^beta for i = 0..N-1.
Eigen::VectorXd powerlaw_spectrum(int N, double beta, double a);

/// One fresh Gaussian input. Replay models go through InputSampler instead.
Eigen::VectorXd sample_input(const InputModel& model, Rng& rng);

/// Streams training inputs: fresh Gaussian draws, or dataset rows in an order
/// reshuffled (without replacement) at every epoch.
class InputSampler {
public:
  InputSampler(const InputModel& model, const RngStream& draw_stream,
               const RngStream& shuffle_stream);

  void next(Eigen::Ref<Eigen::VectorXd> xi);
  std::uint64_t epoch() const { return epoch_; }
  /// Dataset row used by the most recent replay draw (-1 for Gaussian models).
  Eigen::Index last_row() const { return last_row_; }

private:
  void reshuffle();

  const InputModel* model_;
  Rng draw_rng_;
  Rng shuffle_rng_;
  Eigen::VectorXd scale_;
  std::vector<Eigen::Index> order_;
  std::size_t position_ = 0;
  std::uint64_t epoch_ = 0;
  Eigen::Index last_row_ = -1;
};

/// Subtracts the empirical mean of every feature.
FeatureDataset center_features(FeatureDataset dataset);

/// Centers and applies the symmetric (ZCA) whitener U (Lambda + eps I)^{-1/2} U^T
/// built from the empirical covariance X^T X / (n - 1).
FeatureDataset center_and_whiten(FeatureDataset dataset, double epsilon = 1e-5);

/// Empirical covariance (features assumed centered or not; mean is removed).
Eigen::MatrixXd empirical_covariance(const FeatureDataset& dataset);

/// Splits off `test_rows` randomly chosen rows. Returns {train, test}.
std::pair<FeatureDataset, FeatureDataset> split_holdout(const FeatureDataset& dataset,
                                                        Eigen::Index test_rows,
                                                        const RngStream& stream);

/// Loads the text format (JSON header line + CSV rows) or, when a sidecar
/// `<path>.json` exists, the raw little-endian float32 format.
FeatureDataset load_features(const std::filesystem::path& path);

void save_features_text(const FeatureDataset& dataset, const std::filesystem::path& path);
/// Writes `<path>` (float32 rows, then int32 labels if present) and `<path>.json`.
void save_features_raw(const FeatureDataset& dataset, const std::filesystem::path& path);

}  // namespace tsoftmax

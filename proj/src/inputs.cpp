#include "tsoftmax/inputs.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "tsoftmax/error.hpp"

namespace tsoftmax {

namespace {

constexpr Eigen::Index kChunkRows = 4096;

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

InputModel InputModel::replay(std::shared_ptr<const FeatureDataset> dataset) {
  require(dataset != nullptr, "InputModel::replay: null dataset");
  InputModel model;
  model.kind = InputKind::replay;
  model.N = static_cast<int>(dataset->dimension());
  model.dataset = std::move(dataset);
  return model;
}

Eigen::VectorXd InputModel::variances() const {
  require(gaussian(), "InputModel::variances: only defined for Gaussian inputs");
  if (kind == InputKind::isotropic) return Eigen::VectorXd::Ones(N);
  return powerlaw_spectrum(N, beta, a);
}

void InputModel::validate() const {
  require(N >= 1, "InputModel: N must be positive");
  if (kind == InputKind::powerlaw_cov) {
    require(beta >= 0.0 && std::isfinite(beta), "InputModel: beta must be >= 0");
    require(a > 0.0 && std::isfinite(a), "InputModel: a must be > 0");
  }
  if (kind == InputKind::replay) {
    require(dataset != nullptr, "InputModel: replay needs a dataset");
    require(dataset->dimension() == N, "InputModel: dataset dimension differs from N");
  }
}

Eigen::VectorXd powerlaw_spectrum(int N, double beta, double a) {
  require(N >= 1, "powerlaw_spectrum: N must be positive");
  require(a > 0.0 && std::isfinite(a), "powerlaw_spectrum: a must be > 0");
  require(beta >= 0.0 && std::isfinite(beta), "powerlaw_spectrum: beta must be >= 0");
  Eigen::VectorXd lambda(N);
  for (int i = 0; i < N; ++i) lambda[i] = std::pow(a / (a + i), beta);
  return lambda;
}

Eigen::VectorXd sample_input(const InputModel& model, Rng& rng) {
  model.validate();
  require(model.gaussian(), "sample_input: replay inputs are drawn through InputSampler");
  Eigen::VectorXd xi(model.N);
  rng.fill_normal(xi);
  if (model.kind == InputKind::powerlaw_cov) {
    xi.array() *= powerlaw_spectrum(model.N, model.beta, model.a).array().sqrt();
  }
  return xi;
}

InputSampler::InputSampler(const InputModel& model, const RngStream& draw_stream,
                           const RngStream& shuffle_stream)
    : model_(&model), draw_rng_(draw_stream), shuffle_rng_(shuffle_stream) {
  model.validate();
  if (model.kind == InputKind::powerlaw_cov) {
    scale_ = model.variances().array().sqrt();
  } else if (model.kind == InputKind::replay) {
    if (model.dataset->rows() == 0) throw PreconditionError("InputSampler: empty dataset");
    order_.resize(static_cast<std::size_t>(model.dataset->rows()));
    reshuffle();
  }
}

void InputSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  // Fisher-Yates with our own integer draw so the order is platform-stable.
  for (std::size_t i = order_.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(shuffle_rng_.below(i));
    std::swap(order_[i - 1], order_[j]);
  }
  position_ = 0;
}

void InputSampler::next(Eigen::Ref<Eigen::VectorXd> xi) {
  switch (model_->kind) {
    case InputKind::isotropic:
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = draw_rng_.normal();
      return;
    case InputKind::powerlaw_cov:
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = scale_[i] * draw_rng_.normal();
      return;
    case InputKind::replay:
      if (position_ == order_.size()) {
        ++epoch_;
        reshuffle();
      }
      last_row_ = order_[position_++];
      xi = model_->dataset->features.row(last_row_).transpose().cast<double>();
      return;
  }
}

Eigen::MatrixXd empirical_covariance(const FeatureDataset& dataset) {
  const Eigen::Index n = dataset.rows();
  const Eigen::Index N = dataset.dimension();
  require(n >= 2, "empirical_covariance: need at least two samples");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(N);
  for (Eigen::Index start = 0; start < n; start += kChunkRows) {
    const Eigen::Index rows = std::min(kChunkRows, n - start);
    mean += dataset.features.middleRows(start, rows).cast<double>().colwise().sum().transpose();
  }
  mean /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index start = 0; start < n; start += kChunkRows) {
    const Eigen::Index rows = std::min(kChunkRows, n - start);
    Eigen::MatrixXd chunk = dataset.features.middleRows(start, rows).cast<double>();
    chunk.rowwise() -= mean.transpose();
    cov.selfadjointView<Eigen::Lower>().rankUpdate(chunk.transpose());
  }
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return cov / static_cast<double>(n - 1);
}

namespace {

Eigen::VectorXd column_means(const FeatureDataset& dataset) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dataset.dimension());
  for (Eigen::Index start = 0; start < dataset.rows(); start += kChunkRows) {
    const Eigen::Index rows = std::min(kChunkRows, dataset.rows() - start);
    mean += dataset.features.middleRows(start, rows).cast<double>().colwise().sum().transpose();
  }
  return mean / static_cast<double>(dataset.rows());
}

void check_finite(const FeatureDataset& dataset) {
  if (!dataset.features.allFinite()) throw PreconditionError("feature matrix has non-finite entries");
}

}  // namespace

FeatureDataset center_features(FeatureDataset dataset) {
  require(dataset.rows() >= 1, "center_features: empty dataset");
  check_finite(dataset);
  const Eigen::RowVectorXf mean = column_means(dataset).transpose().cast<float>();
  dataset.features.rowwise() -= mean;
  dataset.preprocessing.centered = true;
  return dataset;
}

FeatureDataset center_and_whiten(FeatureDataset dataset, double epsilon) {
  require(dataset.rows() >= 2, "center_and_whiten: need at least two samples");
  require(epsilon > 0.0, "center_and_whiten: epsilon must be positive");
  check_finite(dataset);
  const Eigen::VectorXd mean = column_means(dataset);
  const Eigen::MatrixXd cov = empirical_covariance(dataset);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd& U = eig.eigenvectors();
  const Eigen::MatrixXd whitener =
      U * (lambda.array() + epsilon).rsqrt().matrix().asDiagonal() * U.transpose();

  const Eigen::Index n = dataset.rows();
  for (Eigen::Index start = 0; start < n; start += kChunkRows) {
    const Eigen::Index rows = std::min(kChunkRows, n - start);
    Eigen::MatrixXd chunk = dataset.features.middleRows(start, rows).cast<double>();
    chunk.rowwise() -= mean.transpose();
    dataset.features.middleRows(start, rows) = (chunk * whitener).cast<float>();
  }
  dataset.preprocessing = {true, true, epsilon};
  return dataset;
}

std::pair<FeatureDataset, FeatureDataset> split_holdout(const FeatureDataset& dataset,
                                                        Eigen::Index test_rows,
                                                        const RngStream& stream) {
  require(test_rows >= 0 && test_rows < dataset.rows(),
          "split_holdout: test_rows must leave at least one training row");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(dataset.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(stream);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }
  const auto take = [&](std::size_t begin, std::size_t end) {
    FeatureDataset out;
    out.features.resize(static_cast<Eigen::Index>(end - begin), dataset.dimension());
    if (dataset.labels) out.labels.emplace();
    for (std::size_t k = begin; k < end; ++k) {
      out.features.row(static_cast<Eigen::Index>(k - begin)) = dataset.features.row(order[k]);
      if (dataset.labels) out.labels->push_back((*dataset.labels)[order[k]]);
    }
    out.num_classes = dataset.num_classes;
    out.preprocessing = dataset.preprocessing;
    return out;
  };
  const auto t = static_cast<std::size_t>(test_rows);
  return {take(t, order.size()), take(0, t)};
}

namespace {

struct FeatureHeader {
  Eigen::Index n = 0;
  Eigen::Index N = 0;
  bool has_labels = false;
  int K = 0;
};

FeatureHeader parse_header(const std::string& line, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": malformed header: " + e.what());
  }
  FeatureHeader h;
  try {
    h.n = j.at("n").get<Eigen::Index>();
    h.N = j.at("N").get<Eigen::Index>();
    h.has_labels = j.at("has_labels").get<bool>();
    if (j.contains("K")) h.K = j.at("K").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": malformed header: " + e.what());
  }
  if (h.n < 0 || h.N < 1 || h.K < 0) throw ParseError(where + ": header has invalid n/N/K");
  return h;
}

void finish_labels(FeatureDataset& ds, const FeatureHeader& h, const std::string& where) {
  if (!ds.labels) return;
  int max_label = -1;
  for (int label : *ds.labels) {
    if (label < 0 || (h.K > 0 && label >= h.K)) {
      throw ParseError(where + ": label " + std::to_string(label) + " out of range");
    }
    max_label = std::max(max_label, label);
  }
  ds.num_classes = h.K > 0 ? h.K : max_label + 1;
}

FeatureDataset load_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feature file " + path.string());
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(where + ": missing header line");
  const FeatureHeader h = parse_header(line, where);

  FeatureDataset ds;
  ds.features.resize(h.n, h.N);
  if (h.has_labels) ds.labels.emplace(static_cast<std::size_t>(h.n));
  for (Eigen::Index row = 0; row < h.n; ++row) {
    if (!std::getline(in, line)) {
      throw ParseError(where + ": expected " + std::to_string(h.n) + " rows, got " +
                       std::to_string(row));
    }
    const char* cursor = line.data();
    const char* end = line.data() + line.size();
    if (cursor != end && end[-1] == '\r') --end;
    const Eigen::Index expected = h.N + (h.has_labels ? 1 : 0);
    Eigen::Index field = 0;
    while (cursor <= end) {
      const char* comma = std::find(cursor, end, ',');
      if (field >= expected) {
        throw ParseError(where + ": row " + std::to_string(row + 1) + " has more than " +
                         std::to_string(expected) + " values");
      }
      while (cursor < comma && *cursor == ' ') ++cursor;
      if (field < h.N) {
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(cursor, comma, value);
        if (ec != std::errc() || ptr == cursor) {
          throw ParseError(where + ": bad number in row " + std::to_string(row + 1));
        }
        ds.features(row, field) = static_cast<float>(value);
      } else {
        int label = 0;
        const auto [ptr, ec] = std::from_chars(cursor, comma, label);
        if (ec != std::errc() || ptr == cursor) {
          throw ParseError(where + ": bad label in row " + std::to_string(row + 1));
        }
        (*ds.labels)[static_cast<std::size_t>(row)] = label;
      }
      ++field;
      cursor = comma + 1;
    }
    if (field != expected) {
      throw ParseError(where + ": row " + std::to_string(row + 1) + " has " +
                       std::to_string(field) + " values, expected " + std::to_string(expected));
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line != "\r") throw ParseError(where + ": more rows than declared");
  }
  finish_labels(ds, h, where);
  return ds;
}

FeatureDataset load_raw(const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "raw feature files are little-endian");
  const std::string where = path.string();
  std::ifstream header_in(sidecar_path(path));
  std::string line((std::istreambuf_iterator<char>(header_in)), std::istreambuf_iterator<char>());
  const FeatureHeader h = parse_header(line, sidecar_path(path).string());

  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open feature file " + where);
  const auto expected_bytes = static_cast<std::uintmax_t>(h.n * h.N) * sizeof(float) +
                              (h.has_labels ? static_cast<std::uintmax_t>(h.n) * 4 : 0);
  if (std::filesystem::file_size(path) != expected_bytes) {
    throw ParseError(where + ": size does not match header shape");
  }
  FeatureDataset ds;
  ds.features.resize(h.n, h.N);
  in.read(reinterpret_cast<char*>(ds.features.data()),
          static_cast<std::streamsize>(h.n * h.N * sizeof(float)));
  if (h.has_labels) {
    std::vector<std::int32_t> raw(static_cast<std::size_t>(h.n));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    ds.labels.emplace(raw.begin(), raw.end());
  }
  if (!in) throw ParseError(where + ": truncated data");
  finish_labels(ds, h, where);
  return ds;
}

nlohmann::json header_json(const FeatureDataset& ds) {
  nlohmann::json h = {{"n", ds.rows()}, {"N", ds.dimension()}, {"has_labels", ds.has_labels()}};
  return h;
}

}  // namespace

FeatureDataset load_features(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ParseError("feature file not found: " + path.string());
  if (std::filesystem::exists(sidecar_path(path))) return load_raw(path);
  return load_text(path);
}

void save_features_text(const FeatureDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << header_json(dataset).dump() << '\n';
  char buffer[64];
  for (Eigen::Index row = 0; row < dataset.rows(); ++row) {
    for (Eigen::Index col = 0; col < dataset.dimension(); ++col) {
      if (col > 0) out << ',';
      const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer),
                                           static_cast<double>(dataset.features(row, col)));
      out.write(buffer, ptr - buffer);
    }
    if (dataset.labels) out << ',' << (*dataset.labels)[static_cast<std::size_t>(row)];
    out << '\n';
  }
}

void save_features_raw(const FeatureDataset& dataset, const std::filesystem::path& path) {
  {
    std::ofstream header(sidecar_path(path));
    if (!header) throw ConfigError("cannot write " + sidecar_path(path).string());
    header << header_json(dataset).dump() << '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(dataset.features.data()),
            static_cast<std::streamsize>(dataset.features.size() * sizeof(float)));
  if (dataset.labels) {
    std::vector<std::int32_t> raw(dataset.labels->begin(), dataset.labels->end());
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * 4));
  }
}

}  // namespace tsoftmax

#include "lgtok/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "lgtok/error.hpp"

namespace lgtok::metrics {

FeatureVector motion_features(const nn::Tensor& motion) {
  const std::size_t f = motion.rows(), c = motion.cols();
  require(motion.rank() == 2 && f >= 2, ErrorKind::kData,
          "motion features need at least 2 frames, got " + motion.shape_string());
  FeatureVector out(4 * c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0, diff = 0.0;
    for (std::size_t t = 0; t < f; ++t) sum += motion.at(t, ch);
    const double mean = sum / static_cast<double>(f);
    double var = 0.0;
    for (std::size_t t = 0; t < f; ++t) {
      const double d = motion.at(t, ch) - mean;
      var += d * d;
      if (t > 0) diff += std::fabs(static_cast<double>(motion.at(t, ch)) - motion.at(t - 1, ch));
    }
    out[4 * ch + 0] = mean;
    out[4 * ch + 1] = std::sqrt(var / static_cast<double>(f));
    out[4 * ch + 2] = diff / static_cast<double>(f - 1);
    out[4 * ch + 3] = static_cast<double>(motion.at(f - 1, ch)) - motion.at(0, ch);
  }
  return out;
}

namespace {

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

GaussianFit fit(const std::vector<FeatureVector>& set, std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(set.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    const FeatureVector& v = set[static_cast<std::size_t>(i)];
    require(v.size() == dim, ErrorKind::kShape, "toy FID: feature lengths differ");
    x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(dim));
  }
  GaussianFit g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  g.cov.diagonal().array() += 1e-6;
  return g;
}

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double toy_fid(const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b) {
  require(a.size() >= 2 && b.size() >= 2, ErrorKind::kSampleSize,
          "toy FID needs at least 2 samples per set, got " + std::to_string(a.size()) + " and " +
              std::to_string(b.size()));
  const std::size_t dim = a.front().size();
  require(dim > 0 && b.front().size() == dim, ErrorKind::kShape, "toy FID: feature lengths differ");
  const GaussianFit fa = fit(a, dim), fb = fit(b, dim);
  const Eigen::MatrixXd ra = sym_sqrt(fa.cov);
  Eigen::MatrixXd inner = ra * fb.cov * ra;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d2 = (fa.mean - fb.mean).squaredNorm() + fa.cov.trace() + fb.cov.trace() - 2.0 * tr_sqrt;
  return std::max(d2, 0.0);
}

corpus::SemanticLabel classify_motion(const nn::Tensor& m) {
  const std::size_t f = m.rows();
  require(m.rank() == 2 && m.cols() == corpus::kChannels && f >= 2, ErrorKind::kShape,
          "classifier expects [F >= 2, " + std::to_string(corpus::kChannels) + "] motion, got " + m.shape_string());
  double vert_mean = 0.0, speed = 0.0, limb = 0.0;
  for (std::size_t t = 0; t < f; ++t) {
    vert_mean += m.at(t, 5);
    speed += m.at(t, 6);
    limb += static_cast<double>(m.at(t, 3)) * m.at(t, 3) + static_cast<double>(m.at(t, 4)) * m.at(t, 4);
  }
  const double n = static_cast<double>(f);
  vert_mean /= n;
  double vert_var = 0.0;
  for (std::size_t t = 0; t < f; ++t) vert_var += (m.at(t, 5) - vert_mean) * (m.at(t, 5) - vert_mean);
  const double vert_std = std::sqrt(vert_var / n);
  const double amplitude = std::sqrt(limb / n);
  const double yaw_rate = (static_cast<double>(m.at(f - 1, 2)) - m.at(0, 2)) * corpus::kFps / (n - 1.0);

  corpus::SemanticLabel label;
  if (yaw_rate > kTurnYawRate) {
    label.action = corpus::ActionClass::kTurnLeft;
  } else if (yaw_rate < -kTurnYawRate) {
    label.action = corpus::ActionClass::kTurnRight;
  } else if (vert_std > kJumpVerticalStd) {
    label.action = corpus::ActionClass::kJump;
  } else if (amplitude > kRunLimbAmplitude) {
    label.action = corpus::ActionClass::kRun;
  } else {
    label.action = corpus::ActionClass::kWalk;
  }
  label.speed = corpus::speed_bucket(static_cast<float>(speed / n));
  // Heading of the early root displacement; an extrapolated yaw angle can wrap past +-pi.
  const std::size_t k = std::min(f - 1, kHeadingFrames);
  const double dx = static_cast<double>(m.at(k, 0)) - m.at(0, 0);
  const double dz = static_cast<double>(m.at(k, 1)) - m.at(0, 1);
  label.direction = corpus::direction_bucket(static_cast<float>(std::atan2(dz, dx)));
  return label;
}

SemanticScore semantic_accuracy(const std::vector<nn::Tensor>& raw_motions, const std::vector<std::string>& captions) {
  require(!raw_motions.empty(), ErrorKind::kSampleSize, "semantic accuracy over an empty motion set");
  require(raw_motions.size() == captions.size(), ErrorKind::kShape,
          "semantic accuracy: " + std::to_string(raw_motions.size()) + " motions for " +
              std::to_string(captions.size()) + " captions");
  SemanticScore s;
  s.total = raw_motions.size();
  for (std::size_t i = 0; i < raw_motions.size(); ++i) {
    const auto want = corpus::parse_caption(captions[i]);
    if (!want) {
      s.unparsable.push_back(captions[i]);
      continue;
    }
    if (classify_motion(raw_motions[i]) == *want) ++s.matched;
  }
  s.accuracy = static_cast<double>(s.matched) / static_cast<double>(s.total);
  return s;
}

}  // namespace lgtok::metrics

#include "latmap/io/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace latmap {

double metric_cos(const MatX<float>& reconstructed, const MatX<float>& target, bool* flagged) {
  if (reconstructed.rows() != target.rows() || reconstructed.cols() != target.cols())
    throw std::invalid_argument("metric_cos: shape mismatch");
  if (flagged) *flagged = false;
  const Eigen::Index n = reconstructed.rows();
  if (n == 0) return 0;
  double sum = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    double nu = reconstructed.row(r).norm();
    double nv = target.row(r).norm();
    if ((nu < 1e-8 || nv < 1e-8) && flagged) *flagged = true;
    nu = std::max(nu, 1e-8);
    nv = std::max(nv, 1e-8);
    sum += 1.0 - double(reconstructed.row(r).dot(target.row(r))) / (nu * nv);
  }
  return sum / double(n);
}

MiouResult metric_miou(const MatX<float>& embeddings, const std::vector<int32_t>& labels,
                       const MatX<float>& prototypes) {
  if (size_t(embeddings.rows()) != labels.size())
    throw std::invalid_argument("metric_miou: embeddings/labels size mismatch");
  const Eigen::Index c = prototypes.rows();
  MiouResult res;
  res.intersection.assign(size_t(c), 0);
  res.union_.assign(size_t(c), 0);
  res.per_class_iou.assign(size_t(c), 0.0);
  res.class_included.assign(size_t(c), 0);

  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const int32_t gt = labels[size_t(i)];
    if (gt < 0) continue;
    if (gt >= c) throw std::invalid_argument("metric_miou: label id out of range");
    // softmax over inner products; argmax is what decides the prediction
    VecX<float> scores = prototypes * embeddings.row(i).transpose();
    const float m = scores.maxCoeff();
    VecX<float> probs = (scores.array() - m).exp();
    probs /= probs.sum();
    Eigen::Index pred = 0;
    probs.maxCoeff(&pred);

    if (pred == gt) {
      ++res.intersection[size_t(gt)];
      ++res.union_[size_t(gt)];
    } else {
      ++res.union_[size_t(gt)];
      ++res.union_[size_t(pred)];
    }
  }

  double sum = 0;
  int64_t included = 0;
  for (Eigen::Index k = 0; k < c; ++k) {
    if (res.union_[size_t(k)] == 0) continue;  // absent from both
    res.class_included[size_t(k)] = 1;
    res.per_class_iou[size_t(k)] =
        double(res.intersection[size_t(k)]) / double(res.union_[size_t(k)]);
    sum += res.per_class_iou[size_t(k)];
    ++included;
  }
  res.miou = included > 0 ? sum / double(included) : 0.0;
  return res;
}

PsnrResult metric_psnr(const ImageT<float>& rendered, const ImageT<float>& observed) {
  if (rendered.size() != observed.size() || rendered.height != observed.height)
    throw std::invalid_argument("metric_psnr: shape mismatch");
  double mse = 0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    double d = double(rendered.data[i]) - double(observed.data[i]);
    mse += d * d;
  }
  mse /= double(rendered.data.size());
  PsnrResult r;
  if (mse == 0) {
    r.db = 100.0;
    r.exact = true;
  } else {
    r.db = 10.0 * std::log10(1.0 / mse);
  }
  return r;
}

}  // namespace latmap

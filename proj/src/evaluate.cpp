#include "latmap/io/evaluate.hpp"

#include <cmath>

#include "latmap/obj/objective.hpp"
#include "latmap/splat/render.hpp"

namespace latmap {

EvalResult evaluate_map(const GaussianMap& map, const DictionaryState& dict,
                        const DatasetManifest& data, const MatX<float>& prototypes, int stride,
                        int threads) {
  if (stride < 1) throw std::invalid_argument("evaluate_map: stride must be >= 1");
  EvalResult res;
  double cos_sum = 0, psnr_sum = 0;
  int64_t frame_count = 0;
  // mIoU is pooled over pixels so rare classes are scored once, not per frame
  std::vector<int64_t> inter, uni;
  if (prototypes.rows() > 0) {
    inter.assign(size_t(prototypes.rows()), 0);
    uni.assign(size_t(prototypes.rows()), 0);
  }

  for (int f = 0; f < data.frame_count(); f += stride) {
    const Keyframe kf = load_frame(data, f);
    const RenderOutput view = render(map, kf.pose, data.intrinsics, threads);

    EvalFrameRow row;
    row.frame_index = f;
    row.psnr = metric_psnr(view.color, kf.rgb).db;
    psnr_sum += row.psnr;

    SupervisionRows<float> sup = gather_supervision(view, kf.embeddings, false);
    if (sup.queries.rows() > 0) {
      // normalize targets the same way mapping does
      MatX<float> targets = sup.targets;
      for (Eigen::Index r = 0; r < targets.rows(); ++r) {
        const float n = targets.row(r).norm();
        if (n > 1e-12f) targets.row(r) /= n;
      }
      const MatX<float> rec = reconstruct<float>(sup.queries, dict, nullptr);
      row.cos_loss = metric_cos(rec, targets);
      row.labeled_pixels = sup.queries.rows();

      if (!kf.labels.empty() && prototypes.rows() > 0) {
        std::vector<int32_t> labels(static_cast<size_t>(rec.rows()));
        for (size_t r = 0; r < labels.size(); ++r)
          labels[r] = kf.labels[size_t(sup.pixel_of_row[r])];
        const MiouResult m = metric_miou(rec, labels, prototypes);
        row.miou = m.miou;
        for (size_t c = 0; c < inter.size(); ++c) {
          inter[c] += m.intersection[c];
          uni[c] += m.union_[c];
        }
      }
    }
    cos_sum += row.cos_loss;
    ++frame_count;
    res.frames.push_back(row);
  }

  if (frame_count > 0) {
    res.cos_loss = cos_sum / double(frame_count);
    res.psnr = psnr_sum / double(frame_count);
  }
  double iou_sum = 0;
  int64_t included = 0;
  for (size_t c = 0; c < uni.size(); ++c) {
    if (uni[c] == 0) continue;
    iou_sum += double(inter[c]) / double(uni[c]);
    ++included;
  }
  res.miou = included > 0 ? iou_sum / double(included) : 0.0;
  return res;
}

VecX<float> query_map(const GaussianMap& map, const DictionaryState& dict,
                      const VecX<float>& embedding) {
  if (map.size() == 0) return VecX<float>();
  const MatX<float> rec = reconstruct<float>(map.features, dict, nullptr);
  VecX<float> scores(map.size());
  const float qn = std::max(embedding.norm(), 1e-8f);
  for (Eigen::Index i = 0; i < rec.rows(); ++i) {
    const float rn = std::max(rec.row(i).norm(), 1e-8f);
    scores(i) = rec.row(i).dot(embedding.transpose()) / (rn * qn);
  }
  return scores;
}

}  // namespace latmap

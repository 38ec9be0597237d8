#pragma once

#include <vector>

#include "cbw/geometry.hpp"
#include "cbw/tensor.hpp"

namespace cbw {

struct DepthEvalResult {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double rmse_log = 0.0;
    double d1 = 0.0;  // fraction with max ratio < 1.25
    double d2 = 0.0;  // < 1.25^2
    double d3 = 0.0;  // < 1.25^3
    double cap = 0.0;
    long valid_count = 0;
};

// median(gt over mask) / median(pred over mask); throws on an empty mask.
double median_scale(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Standard capped depth metrics. Pixels with gt <= 0 or gt > cap are
// excluded; pred is clamped to [1e-3, cap]. `pred` must already be aligned.
DepthEvalResult depth_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                              double cap);

struct AteResult {
    double rms = 0.0;
    double scale = 1.0;
    bool scale_fallback = false;  // all-zero predicted translations
};

// Snippet absolute trajectory error: closed-form scale on the predicted
// translations, then RMS of the residual translation norms over all frames.
AteResult ate_snippet(const std::vector<RigidTransform>& pred,
                      const std::vector<RigidTransform>& gt);

struct MetricsTable {
    std::vector<DepthEvalResult> rows;
    DepthEvalResult mean() const;
};

// Aligned text table in the conventional column order plus key=value lines.
std::string format_metrics(const DepthEvalResult& r);
std::string format_metrics_table(const DepthEvalResult& r);

}  // namespace cbw

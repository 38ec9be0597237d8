#include "cbw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace cbw {

namespace {

double median(std::vector<double>& v) {
    if (v.empty()) fail("median: empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        const double lower =
            *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lower);
    }
    return m;
}

}  // namespace

double median_scale(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    if (pred.shape() != gt.shape() || pred.shape() != mask.shape())
        fail("median_scale: shape mismatch");
    std::vector<double> pv, gv;
    const std::vector<double>& p = pred.values();
    const std::vector<double>& g = gt.values();
    const std::vector<double>& m = mask.values();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] == 0.0) continue;
        pv.push_back(p[i]);
        gv.push_back(g[i]);
    }
    if (pv.empty()) fail("median_scale: empty mask");
    return median(gv) / median(pv);
}

DepthEvalResult depth_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                              double cap) {
    if (pred.shape() != gt.shape() || pred.shape() != mask.shape())
        fail("depth_metrics: shape mismatch");
    const std::vector<double>& p = pred.values();
    const std::vector<double>& g = gt.values();
    const std::vector<double>& m = mask.values();

    DepthEvalResult r;
    r.cap = cap;
    double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, sq_log = 0.0;
    long n = 0, c1 = 0, c2 = 0, c3 = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] == 0.0) continue;
        const double d_gt = g[i];
        if (d_gt <= 0.0 || d_gt > cap) continue;
        const double d = std::clamp(p[i], 1e-3, cap);
        const double err = std::fabs(d_gt - d);
        abs_rel += err / d_gt;
        sq_rel += err * err / d_gt;
        sq += err * err;
        const double le = std::log(d_gt) - std::log(d);
        sq_log += le * le;
        const double ratio = std::max(d_gt / d, d / d_gt);
        if (ratio < 1.25) ++c1;
        if (ratio < 1.25 * 1.25) ++c2;
        if (ratio < 1.25 * 1.25 * 1.25) ++c3;
        ++n;
    }
    if (n == 0) fail("depth_metrics: empty mask");
    const double inv = 1.0 / static_cast<double>(n);
    r.abs_rel = abs_rel * inv;
    r.sq_rel = sq_rel * inv;
    r.rmse = std::sqrt(sq * inv);
    r.rmse_log = std::sqrt(sq_log * inv);
    r.d1 = static_cast<double>(c1) * inv;
    r.d2 = static_cast<double>(c2) * inv;
    r.d3 = static_cast<double>(c3) * inv;
    r.valid_count = n;
    return r;
}

AteResult ate_snippet(const std::vector<RigidTransform>& pred,
                      const std::vector<RigidTransform>& gt) {
    if (pred.size() != gt.size() || pred.empty()) fail("ate_snippet: trajectory mismatch");
    AteResult r;
    double dot = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            dot += pred[i].t[k] * gt[i].t[k];
            norm += pred[i].t[k] * pred[i].t[k];
        }
    }
    if (norm == 0.0) {
        r.scale = 1.0;
        r.scale_fallback = true;
    } else {
        r.scale = dot / norm;
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double e = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double d = r.scale * pred[i].t[k] - gt[i].t[k];
            e += d * d;
        }
        sq += e;
    }
    r.rms = std::sqrt(sq / static_cast<double>(pred.size()));
    return r;
}

DepthEvalResult MetricsTable::mean() const {
    DepthEvalResult m;
    if (rows.empty()) return m;
    for (const DepthEvalResult& r : rows) {
        m.abs_rel += r.abs_rel;
        m.sq_rel += r.sq_rel;
        m.rmse += r.rmse;
        m.rmse_log += r.rmse_log;
        m.d1 += r.d1;
        m.d2 += r.d2;
        m.d3 += r.d3;
        m.valid_count += r.valid_count;
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    m.abs_rel *= inv;
    m.sq_rel *= inv;
    m.rmse *= inv;
    m.rmse_log *= inv;
    m.d1 *= inv;
    m.d2 *= inv;
    m.d3 *= inv;
    m.cap = rows.front().cap;
    return m;
}

std::string format_metrics_table(const DepthEvalResult& r) {
    char buf[256];
    std::string out = "  AbsRel   SqRel    RMSE  RMSElog  delta1  delta2  delta3\n";
    std::snprintf(buf, sizeof(buf), "%8.4f %7.4f %7.4f %8.4f %7.4f %7.4f %7.4f\n",
                  r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.d1, r.d2, r.d3);
    out += buf;
    return out;
}

std::string format_metrics(const DepthEvalResult& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "abs_rel=%.9g\nsq_rel=%.9g\nrmse=%.9g\nrmse_log=%.9g\n"
                  "delta1=%.9g\ndelta2=%.9g\ndelta3=%.9g\ncap=%.9g\nvalid=%ld\n",
                  r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.d1, r.d2, r.d3, r.cap,
                  r.valid_count);
    return buf;
}

}  // namespace cbw

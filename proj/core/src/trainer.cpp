#include "cbw/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "cbw/image_io.hpp"
#include "cbw/rng.hpp"

namespace cbw {

namespace {

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    fail("config: expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
    if (key == "preset") {
        preset = value;
        lambdas = LambdaConfig::preset(value);
    } else if (key == "batch_size") {
        batch_size = std::stoi(value);
    } else if (key == "learning_rate") {
        learning_rate = std::stod(value);
    } else if (key == "beta1") {
        beta1 = std::stod(value);
    } else if (key == "beta2") {
        beta2 = std::stod(value);
    } else if (key == "weight_decay") {
        weight_decay = std::stod(value);
    } else if (key == "adam_epsilon") {
        adam_epsilon = std::stod(value);
    } else if (key == "iterations") {
        iterations = std::stol(value);
    } else if (key == "snippet_length") {
        snippet_length = std::stoi(value);
    } else if (key == "seed") {
        seed = std::stoull(value);
    } else if (key == "flip_augment") {
        flip_augment = parse_bool(value);
    } else if (key == "scale_crop_augment") {
        scale_crop_augment = parse_bool(value);
    } else if (key == "grad_clip_norm") {
        grad_clip_norm = std::stod(value);
    } else if (key == "checkpoint_every") {
        checkpoint_every = std::stol(value);
    } else if (key == "deterministic") {
        deterministic = parse_bool(value);
    } else if (key == "pose_scale") {
        net.pose_scale = std::stod(value);
    } else {
        fail("config: unknown key '" + key + "'");
    }
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("config: cannot open " + path);
    TrainConfig cfg;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("config: expected key = value, got '" + line + "'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    if (cfg.batch_size < 1) fail("config: batch size must be >= 1");
    if (cfg.snippet_length % 2 == 0) fail("config: snippet length must be odd");
    return cfg;
}

// ---- augmentation ----------------------------------------------------------

namespace {

Tensor flip_horizontal(const Tensor& image) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::vector<double> out(image.numel());
    const std::vector<double>& v = image.values();
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(static_cast<std::size_t>(ci) * h + y) * w + x] =
                    v[(static_cast<std::size_t>(ci) * h + y) * w + (w - 1 - x)];
    return Tensor::from_data(image.shape(), std::move(out));
}

double sample_bilinear_plane(const double* p, int h, int w, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = std::min(static_cast<int>(x), w - 1);
    const int y0 = std::min(static_cast<int>(y), h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fx) * (1 - fy) * p[y0 * w + x0] + fx * (1 - fy) * p[y0 * w + x1] +
           (1 - fx) * fy * p[y1 * w + x0] + fx * fy * p[y1 * w + x1];
}

// Upscale by `s` then crop back to the original size at offset (ox, oy).
Tensor scale_crop(const Tensor& image, double s, double ox, double oy) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::vector<double> out(image.numel());
    const std::vector<double>& v = image.values();
    for (int ci = 0; ci < c; ++ci) {
        const double* plane = v.data() + static_cast<std::size_t>(ci) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(static_cast<std::size_t>(ci) * h + y) * w + x] =
                    sample_bilinear_plane(plane, h, w, (x + ox) / s, (y + oy) / s);
    }
    return Tensor::from_data(image.shape(), std::move(out));
}

struct AugmentedSample {
    std::vector<Tensor> images;
    Intrinsics k;
};

AugmentedSample augment(const std::vector<Tensor>& images, const Intrinsics& k,
                        const TrainConfig& cfg, Rng& rng) {
    AugmentedSample out;
    out.images = images;
    out.k = k;
    if (cfg.scale_crop_augment) {
        const double s = rng.uniform(1.0, 1.15);
        const int w = images[0].dim(2), h = images[0].dim(1);
        const double ox = rng.uniform(0.0, (s - 1.0) * w);
        const double oy = rng.uniform(0.0, (s - 1.0) * h);
        for (Tensor& img : out.images) img = scale_crop(img, s, ox, oy);
        out.k.fx *= s;
        out.k.fy *= s;
        out.k.cx = out.k.cx * s - ox;
        out.k.cy = out.k.cy * s - oy;
    }
    if (cfg.flip_augment && rng.uniform() < 0.5) {
        const int w = images[0].dim(2);
        for (Tensor& img : out.images) img = flip_horizontal(img);
        out.k.cx = (w - 1) - out.k.cx;
    }
    return out;
}

}  // namespace

// ---- forward ---------------------------------------------------------------

SnippetForward forward_snippet(const DepthNetParams& depth_params,
                               const CameraNetParams& camera_params,
                               const std::vector<Tensor>& images, int target_index) {
    SnippetForward out;
    out.target_image = images[static_cast<std::size_t>(target_index)];
    out.target = [&] {
        const DepthNetOutputs d = depthnet_forward(depth_params, out.target_image);
        return FrameOutputs{d.depths, d.features};
    }();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (static_cast<int>(i) == target_index) continue;
        const DepthNetOutputs d = depthnet_forward(depth_params, images[i]);
        out.refs.push_back(FrameOutputs{d.depths, d.features});
        out.ref_images.push_back(images[i]);
        const Tensor stacked = concat(out.target_image, images[i], 0);
        const std::vector<Tensor> poses = cameranet_forward(camera_params, stacked);
        out.poses_to_refs.push_back(PoseSE3::from_vector(poses[0]));
    }
    return out;
}

// ---- optimizer ---------------------------------------------------------------

namespace {

struct ParamSlot {
    Tensor* tensor = nullptr;
    std::string name;
    std::vector<double> m;
    std::vector<double> v;
};

std::vector<ParamSlot> collect_params(DepthNetParams& depth, CameraNetParams& camera) {
    std::vector<ParamSlot> slots;
    const auto add = [&slots](const std::string& name, Tensor& t) {
        ParamSlot s;
        s.tensor = &t;
        s.name = name;
        s.m.assign(t.numel(), 0.0);
        s.v.assign(t.numel(), 0.0);
        slots.push_back(std::move(s));
    };
    depth.for_each(add);
    camera.for_each(add);
    return slots;
}

struct SampleEvalResult {
    std::vector<std::vector<double>> grads;  // by param slot order
    LossReport report;
    bool failed = false;
    std::string error;
};

void eval_sample(const TrainConfig& cfg, const DepthNetParams& depth_master,
                 const CameraNetParams& camera_master, const std::vector<Tensor>& images,
                 const Intrinsics& k, int target_index, SampleEvalResult& out) {
    try {
        DepthNetParams depth = depth_master.clone(true);
        CameraNetParams camera = camera_master.clone(true);
        Tape tape;
        Tape::Scope scope(tape);

        const SnippetForward fwd = forward_snippet(depth, camera, images, target_index);
        CbwInputs inputs;
        inputs.target_image = fwd.target_image;
        inputs.ref_images = fwd.ref_images;
        inputs.target = fwd.target;
        inputs.refs = fwd.refs;
        inputs.poses_to_refs = fwd.poses_to_refs;
        inputs.k = k;
        out.report = cbw_total(inputs, cfg.lambdas, cfg.constants);
        backward(out.report.total_tensor);

        out.grads.clear();
        const auto grab = [&out](const std::string&, Tensor& t) {
            out.grads.push_back(t.grad());
        };
        depth.for_each(grab);
        camera.for_each(grab);
    } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
    }
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const std::string& out_checkpoint, std::ostream* loss_log) {
    if (dataset.snippet_count() == 0) fail("train: dataset has no snippets");

    auto [depth, camera] = init_params(config.net, config.seed);
    std::vector<ParamSlot> slots = collect_params(depth, camera);

    // Snippets stay resident; desk-scale datasets are small.
    std::vector<LoadedSnippet> cache;
    for (int i = 0; i < dataset.snippet_count(); ++i) cache.push_back(dataset.load(i));

    TrainResult result;
    result.checkpoint_path = out_checkpoint;
    save_checkpoint(out_checkpoint, depth, camera);  // iteration 0 state

    Rng order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    Rng augment_rng(config.seed ^ 0x7f4a7c159e3779b9ULL);
    std::vector<int> queue;
    const auto refill = [&] {
        queue.resize(static_cast<std::size_t>(dataset.snippet_count()));
        for (int i = 0; i < dataset.snippet_count(); ++i) queue[static_cast<std::size_t>(i)] = i;
        for (int i = dataset.snippet_count() - 1; i > 0; --i)
            std::swap(queue[static_cast<std::size_t>(i)],
                      queue[static_cast<std::size_t>(order_rng.uniform_int(i + 1))]);
    };
    refill();

    std::vector<double> early_window, late_window;

    for (long iter = 0; iter < config.iterations; ++iter) {
        std::vector<AugmentedSample> batch;
        std::vector<int> batch_targets;
        for (int b = 0; b < config.batch_size; ++b) {
            if (queue.empty()) refill();
            const int idx = queue.back();
            queue.pop_back();
            const LoadedSnippet& snip = cache[static_cast<std::size_t>(idx)];
            batch.push_back(augment(snip.images, dataset.intrinsics(), config, augment_rng));
            batch_targets.push_back(snip.target_index);
        }

        std::vector<SampleEvalResult> evals(batch.size());
        if (config.deterministic || batch.size() == 1) {
            for (std::size_t b = 0; b < batch.size(); ++b)
                eval_sample(config, depth, camera, batch[b].images, batch[b].k,
                            batch_targets[b], evals[b]);
        } else {
            std::vector<std::thread> workers;
            for (std::size_t b = 0; b < batch.size(); ++b)
                workers.emplace_back([&, b] {
                    eval_sample(config, depth, camera, batch[b].images, batch[b].k,
                                batch_targets[b], evals[b]);
                });
            for (std::thread& t : workers) t.join();
        }

        for (const SampleEvalResult& ev : evals) {
            if (ev.failed) {
                result.aborted_non_finite = true;
                result.iterations_run = iter;
                if (loss_log) *loss_log << "iter=" << iter << " term=abort value=nan\n";
                return result;  // last-good checkpoint retained on disk
            }
        }

        // Fixed-order gradient average keeps the step bit-reproducible.
        const double inv_batch = 1.0 / static_cast<double>(batch.size());
        std::vector<std::vector<double>> grad(slots.size());
        for (std::size_t s = 0; s < slots.size(); ++s) {
            grad[s].assign(slots[s].tensor->numel(), 0.0);
            for (std::size_t b = 0; b < evals.size(); ++b) {
                const std::vector<double>& g = evals[b].grads[s];
                for (std::size_t i = 0; i < g.size(); ++i) grad[s][i] += g[i];
            }
            for (double& g : grad[s]) g *= inv_batch;
        }

        if (config.grad_clip_norm > 0.0) {
            double sq = 0.0;
            for (const auto& g : grad)
                for (double x : g) sq += x * x;
            const double norm = std::sqrt(sq);
            if (norm > config.grad_clip_norm) {
                const double scale = config.grad_clip_norm / norm;
                for (auto& g : grad)
                    for (double& x : g) x *= scale;
            }
        }

        // Decoupled-weight-decay adaptive step.
        const long t = iter + 1;
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
        for (std::size_t s = 0; s < slots.size(); ++s) {
            ParamSlot& slot = slots[s];
            std::vector<double>& p = slot.tensor->mutable_values();
            for (std::size_t i = 0; i < p.size(); ++i) {
                slot.m[i] = config.beta1 * slot.m[i] + (1.0 - config.beta1) * grad[s][i];
                slot.v[i] = config.beta2 * slot.v[i] + (1.0 - config.beta2) * grad[s][i] * grad[s][i];
                const double m_hat = slot.m[i] / bc1;
                const double v_hat = slot.v[i] / bc2;
                p[i] -= config.learning_rate *
                        (m_hat / (std::sqrt(v_hat) + config.adam_epsilon) +
                         config.weight_decay * p[i]);
            }
        }

        double mean_total = 0.0;
        for (const SampleEvalResult& ev : evals) mean_total += ev.report.total;
        mean_total /= static_cast<double>(evals.size());
        if (loss_log) {
            LossReport mean_report = evals[0].report;
            mean_report.total = 0;
            mean_report.cbw = 0;
            mean_report.photo = 0;
            mean_report.feat = 0;
            mean_report.dsc = 0;
            mean_report.smooth = 0;
            for (const SampleEvalResult& ev : evals) {
                mean_report.total += ev.report.total * inv_batch;
                mean_report.cbw += ev.report.cbw * inv_batch;
                mean_report.photo += ev.report.photo * inv_batch;
                mean_report.feat += ev.report.feat * inv_batch;
                mean_report.dsc += ev.report.dsc * inv_batch;
                mean_report.smooth += ev.report.smooth * inv_batch;
            }
            mean_report.append_log(*loss_log, iter);
        }
        if (iter >= 50 && iter < 150) early_window.push_back(mean_total);
        if (iter >= config.iterations - 100) late_window.push_back(mean_total);

        if (config.checkpoint_every > 0 && (iter + 1) % config.checkpoint_every == 0)
            save_checkpoint(out_checkpoint, depth, camera);
        result.iterations_run = iter + 1;
    }

    save_checkpoint(out_checkpoint, depth, camera);
    const auto mean_of = [](const std::vector<double>& xs) {
        if (xs.empty()) return 0.0;
        double s = 0.0;
        for (double x : xs) s += x;
        return s / static_cast<double>(xs.size());
    };
    result.early_loss = mean_of(early_window);
    result.late_loss = mean_of(late_window);
    return result;
}

// ---- evaluation ----------------------------------------------------------------

namespace {

RigidTransform pose_from_prediction(const Tensor& v6) {
    NoGrad guard;
    return PoseSE3::from_vector(v6).numeric();
}

}  // namespace

EvalSummary evaluate(const DepthNetParams& depth_params, const CameraNetParams& camera_params,
                     const Dataset& dataset, const EvalOptions& options) {
    EvalSummary summary;
    MetricsTable table;
    std::vector<double> ates, ates_identity;

    if (options.emit_images && !options.image_dir.empty())
        std::filesystem::create_directories(options.image_dir);

    for (int s = 0; s < dataset.snippet_count(); ++s) {
        const LoadedSnippet snip = dataset.load(s);
        const int frames = static_cast<int>(snip.images.size());
        const int mid = snip.target_index;

        for (int f = 0; f < frames; ++f) {
            const DepthNetOutputs out = depthnet_forward(depth_params, snip.images[f]);
            const Tensor& pred = out.depths[0];
            const Tensor& gt = snip.gt_depths[f];
            std::vector<double> mask(gt.numel());
            const std::vector<double>& gv = gt.values();
            for (std::size_t i = 0; i < mask.size(); ++i)
                mask[i] = (gv[i] > 0.0 && gv[i] <= options.cap) ? 1.0 : 0.0;
            const Tensor mask_t = Tensor::from_data(gt.shape(), std::move(mask));
            const double scale = median_scale(pred, gt, mask_t);
            std::vector<double> scaled = pred.values();
            for (double& v : scaled) v *= scale;
            const Tensor pred_scaled = Tensor::from_data(pred.shape(), std::move(scaled));
            table.rows.push_back(depth_metrics(pred_scaled, gt, mask_t, options.cap));

            if (options.emit_images && !options.image_dir.empty()) {
                std::vector<double> inv(pred.numel());
                const std::vector<double>& pv = pred_scaled.values();
                for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / std::max(pv[i], 1e-3);
                const Tensor inv_t = Tensor::from_data(pred.shape(), std::move(inv));
                std::vector<double> err(pred.numel());
                for (std::size_t i = 0; i < err.size(); ++i)
                    err[i] = std::fabs(pv[i] - gv[i]);
                const Tensor err_t = Tensor::from_data(pred.shape(), std::move(err));
                const std::string stem = options.image_dir + "/snippet" + std::to_string(s) +
                                         "_frame" + std::to_string(f);
                write_ppm(stem + "_depth.ppm", normalize_for_display(inv_t));
                write_ppm(stem + "_error.ppm", normalize_for_display(err_t));
            }
        }

        // Snippet trajectory from single-pass pair predictions.
        std::vector<RigidTransform> pred_poses(static_cast<std::size_t>(frames));
        std::vector<RigidTransform> mid_to(static_cast<std::size_t>(frames));
        for (int f = 0; f < frames; ++f) {
            if (f == mid) {
                mid_to[static_cast<std::size_t>(f)] = RigidTransform::identity();
                continue;
            }
            const Tensor stacked = concat(snip.images[static_cast<std::size_t>(mid)],
                                          snip.images[static_cast<std::size_t>(f)], 0);
            const std::vector<Tensor> vs = cameranet_forward(camera_params, stacked);
            mid_to[static_cast<std::size_t>(f)] = pose_from_prediction(vs[0]);
        }
        const RigidTransform mid_to_first = mid_to[0];
        for (int f = 0; f < frames; ++f)
            pred_poses[static_cast<std::size_t>(f)] =
                mid_to_first.compose(mid_to[static_cast<std::size_t>(f)].inverse());

        ates.push_back(ate_snippet(pred_poses, snip.gt_poses).rms);
        std::vector<RigidTransform> identity_traj(static_cast<std::size_t>(frames));
        ates_identity.push_back(ate_snippet(identity_traj, snip.gt_poses).rms);
    }

    summary.depth_mean = table.mean();
    summary.snippet_count = static_cast<int>(ates.size());
    summary.frames_evaluated = static_cast<long>(table.rows.size());
    double mean = 0.0, sq = 0.0;
    for (double a : ates) mean += a;
    mean /= std::max<std::size_t>(ates.size(), 1);
    for (double a : ates) sq += (a - mean) * (a - mean);
    summary.ate_mean = mean;
    summary.ate_std = std::sqrt(sq / std::max<std::size_t>(ates.size(), 1));
    double rms = 0.0;
    for (double a : ates) rms += a * a;
    summary.ate_rms = std::sqrt(rms / std::max<std::size_t>(ates.size(), 1));
    double id_mean = 0.0;
    for (double a : ates_identity) id_mean += a;
    summary.ate_identity_mean = id_mean / std::max<std::size_t>(ates_identity.size(), 1);
    return summary;
}

}  // namespace cbw

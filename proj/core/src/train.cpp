#include "mslir/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "mslir/metrics.hpp"

namespace mslir {

namespace {

void check_sample(const Scheme& scheme, const Sample& s, const char* split) {
    if (static_cast<std::int64_t>(s.truth.size()) != numel(scheme.image_shape()) ||
        static_cast<std::int64_t>(s.data.size()) != numel(scheme.data_shape()))
        throw std::invalid_argument(std::string("train: ") + split + " sample does not match image " +
                                    to_string(scheme.image_shape()) + " / data " + to_string(scheme.data_shape()));
}

double mean_psnr(SchemeGraph<float>& inf, std::span<const Sample> samples) {
    double total = 0;
    for (const auto& s : samples) {
        inf.graph->set_input(inf.data, s.data);
        inf.graph->forward();
        total += psnr(inf.graph->value(inf.output), s.truth);
    }
    return total / static_cast<double>(samples.size());
}

}  // namespace

TrainResult train(const Scheme& scheme, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed,
                  ParamStore<float>& params) {
    if (data.train.empty()) throw std::invalid_argument("train: the training split is empty");
    for (const auto& s : data.train) check_sample(scheme, s, "training");
    for (const auto& s : data.val) check_sample(scheme, s, "validation");
    if (cfg.steps < 0 || cfg.eval_every < 1) throw std::invalid_argument("train: invalid step counts");

    const auto t_start = std::chrono::steady_clock::now();
    auto sg = scheme.build<float>(&params, cfg.loss == LossMode::none ? LossMode::end_to_end : cfg.loss);
    auto inf = scheme.build<float>(&params, LossMode::none);
    Adam opt(cfg.adam);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, data.train.size() - 1);

    TrainResult res;
    const bool validate = !data.val.empty();
    std::int64_t done = 0;
    for (std::int64_t t = 0; t < cfg.steps; ++t) {
        const Sample& s = data.train[pick(rng)];
        sg.graph->set_input(sg.data, s.data);
        sg.graph->set_input(sg.truth, s.truth);
        params.zero_grad();
        LogRow row;
        row.step = t;
        row.lr = cosine_lr(cfg.lr, t, cfg.steps);
        try {
            sg.graph->forward();
            row.loss = static_cast<double>(sg.graph->scalar(sg.loss));
            if (!std::isfinite(row.loss)) throw NonFiniteError("loss", false);
            sg.graph->backward(sg.loss);
        } catch (const NonFiniteError& e) {
            res.aborted = true;
            res.abort_reason = "step " + std::to_string(t) + ": " + e.what();
            break;
        }
        opt.step(params, row.lr);
        done = t + 1;
        if (validate && (done % cfg.eval_every == 0 || done == cfg.steps)) {
            row.val_psnr = mean_psnr(inf, data.val);
            if (row.val_psnr > res.best_val_psnr) {
                res.best_val_psnr = row.val_psnr;
                res.best_checkpoint = make_checkpoint(scheme.config(), params, &opt, done);
            }
        }
        res.log.push_back(row);
    }
    params.zero_grad();
    res.final_checkpoint = make_checkpoint(scheme.config(), params, &opt, done);
    if (!validate || res.best_checkpoint.params.empty()) res.best_checkpoint = res.final_checkpoint;
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

std::vector<std::vector<float>> reconstruct_all(const Scheme& scheme, ParamStore<float>& params,
                                                std::span<const Sample> samples) {
    auto inf = scheme.build<float>(&params, LossMode::none);
    std::vector<std::vector<float>> out;
    for (const auto& s : samples) {
        inf.graph->set_input(inf.data, s.data);
        inf.graph->forward();
        const auto v = inf.graph->value(inf.output);
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = sd = 0;
    if (v.empty()) return;
    bool all_equal = true;
    for (double x : v) {
        mean += x;
        all_equal = all_equal && x == v.front();
    }
    if (all_equal) {
        mean = v.front();
        return;
    }
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

MetricSummary summarise(std::span<const std::vector<float>> recons, std::span<const Sample> samples,
                        const Shape& shape) {
    if (recons.size() != samples.size()) throw std::invalid_argument("summarise: count mismatch");
    MetricSummary m;
    m.count = samples.size();
    for (std::size_t k = 0; k < samples.size(); ++k) {
        m.psnr.push_back(psnr(recons[k], samples[k].truth));
        m.ssim.push_back(ssim(recons[k], samples[k].truth, shape));
    }
    mean_std(m.psnr, m.psnr_mean, m.psnr_std);
    mean_std(m.ssim, m.ssim_mean, m.ssim_std);
    return m;
}

RobustnessTable robustness_sweep(std::span<const Sample> samples, std::span<const Reconstructor> schemes,
                                 std::span<const double> levels, std::uint64_t seed) {
    if (samples.empty()) throw std::invalid_argument("robustness_sweep: no test samples");
    RobustnessTable t;
    t.levels.assign(levels.begin(), levels.end());
    for (const auto& s : schemes) t.schemes.push_back(s.name);
    t.psnr.assign(schemes.size(), std::vector<double>(levels.size(), 0.0));
    for (std::size_t l = 0; l < levels.size(); ++l) {
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const auto noisy = add_gaussian(samples[k].data, levels[l] / 100.0, derive_seed(seed, 1000 + l, k));
            for (std::size_t s = 0; s < schemes.size(); ++s)
                t.psnr[s][l] += psnr(schemes[s].run(noisy), samples[k].truth);
        }
        for (auto& row : t.psnr) row[l] /= static_cast<double>(samples.size());
    }
    return t;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void write_log_csv(std::ostream& os, std::span<const LogRow> rows, const std::string& config_hash) {
    os << "step,lr,loss,val_psnr,config_hash\n";
    for (const auto& r : rows)
        os << r.step << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ','
           << (std::isnan(r.val_psnr) ? std::string() : format_double(r.val_psnr)) << ',' << config_hash << '\n';
}

}  // namespace mslir

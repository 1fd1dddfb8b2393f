#include "visage/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "visage/errors.hpp"

namespace visage {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidArgument("psnr: image shapes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

std::vector<double> gaussian_window() {
    std::vector<double> w(kSsimWindow * kSsimWindow);
    const int r = kSsimWindow / 2;
    double total = 0.0;
    for (int y = 0; y < kSsimWindow; ++y) {
        for (int x = 0; x < kSsimWindow; ++x) {
            const double dy = y - r, dx = x - r;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
            w[y * kSsimWindow + x] = v;
            total += v;
        }
    }
    for (double& v : w) v /= total;
    return w;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidArgument("ssim: image shapes differ");
    if (a.height < kSsimWindow || a.width < kSsimWindow) {
        throw InvalidArgument("ssim: image smaller than the comparison window");
    }
    static const std::vector<double> window = gaussian_window();
    std::vector<double> la(static_cast<std::size_t>(a.height) * a.width);
    std::vector<double> lb(la.size());
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            la[y * a.width + x] = luminance(a, y, x);
            lb[y * a.width + x] = luminance(b, y, x);
        }
    }
    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;

    double total = 0.0;
    long count = 0;
    for (int y = 0; y + kSsimWindow <= a.height; ++y) {
        for (int x = 0; x + kSsimWindow <= a.width; ++x) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int wy = 0; wy < kSsimWindow; ++wy) {
                for (int wx = 0; wx < kSsimWindow; ++wx) {
                    const double wv = window[wy * kSsimWindow + wx];
                    mu_a += wv * la[(y + wy) * a.width + (x + wx)];
                    mu_b += wv * lb[(y + wy) * a.width + (x + wx)];
                }
            }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int wy = 0; wy < kSsimWindow; ++wy) {
                for (int wx = 0; wx < kSsimWindow; ++wx) {
                    const double wv = window[wy * kSsimWindow + wx];
                    const double da = la[(y + wy) * a.width + (x + wx)] - mu_a;
                    const double db = lb[(y + wy) * a.width + (x + wx)] - mu_b;
                    var_a += wv * da * da;
                    var_b += wv * db * db;
                    cov += wv * da * db;
                }
            }
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

double identity_distance(const Image& a, const Image& b, const IdentityEmbedder& embedder) {
    const Tensor ea = embedder.embed(a);
    const Tensor eb = embedder.embed(b);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < ea.data.size(); ++i) {
        dot += ea.data[i] * eb.data[i];
        na += ea.data[i] * ea.data[i];
        nb += eb.data[i] * eb.data[i];
    }
    if (na == 0.0 && nb == 0.0) return 0.0;  // both embeddings degenerate: same constant image
    if (na == 0.0 || nb == 0.0) return 1.0;
    const double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
    return 1.0 - cosine;
}

void MetricRegistry::register_metric(const std::string& name, MetricFn fn) {
    if (name == "psnr" || name == "ssim" || name == "identity_distance") {
        throw InvalidArgument("metric registry: name collides with a built-in: " + name);
    }
    if (!fn) throw InvalidArgument("metric registry: null metric function");
    if (!plugins_.emplace(name, std::move(fn)).second) {
        throw InvalidArgument("metric registry: duplicate metric name: " + name);
    }
}

MetricReport evaluate_outputs(const std::vector<SampleRecord>& records,
                              const std::string& data_root, const std::string& outputs_dir,
                              const IdentityEmbedder& embedder, const MetricRegistry* plugins) {
    MetricReport report;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> plugin_names;
    if (plugins) {
        for (const auto& [name, fn] : plugins->plugins()) plugin_names.push_back(name);
    }
    std::map<std::string, bool> plugin_ok;
    for (const auto& name : plugin_names) plugin_ok[name] = true;

    for (const SampleRecord& rec : records) {
        report.ids.push_back(rec.id);
        const Image out = load_image((fs::path(outputs_dir) / (rec.id + ".png")).string());
        const Image gt = load_image((fs::path(data_root) / rec.hq_path).string());
        report.per_image["psnr"].push_back(psnr(out, gt));
        report.per_image["ssim"].push_back(ssim(out, gt));
        report.per_image["identity_distance"].push_back(identity_distance(out, gt, embedder));
        for (const auto& name : plugin_names) {
            double value = nan;
            if (plugin_ok[name]) {
                try {
                    value = plugins->plugins().at(name)(out, gt);
                } catch (const std::exception&) {
                    plugin_ok[name] = false;
                }
            }
            report.per_image[name].push_back(value);
        }
    }
    for (const auto& name : plugin_names) {
        if (!plugin_ok[name]) report.failed.push_back(name);
    }
    for (const auto& [name, values] : report.per_image) {
        double acc = 0.0;
        long n = 0;
        for (double v : values) {
            if (std::isfinite(v)) {
                acc += v;
                ++n;
            }
        }
        if (n > 0) report.aggregate[name] = acc / n;
    }
    return report;
}

void write_report(const MetricReport& report, const std::string& jsonl_path,
                  const std::string& summary_path) {
    {
        std::ofstream out(jsonl_path, std::ios::trunc);
        if (!out) throw IoError("report: cannot open " + jsonl_path);
        for (std::size_t i = 0; i < report.ids.size(); ++i) {
            ordered_json line;
            line["id"] = report.ids[i];
            for (const auto& [name, values] : report.per_image) {
                if (std::isfinite(values[i])) {
                    line[name] = values[i];
                } else {
                    line[name] = nullptr;
                }
            }
            out << line.dump() << "\n";
        }
    }
    {
        std::ofstream out(summary_path, std::ios::trunc);
        if (!out) throw IoError("report: cannot open " + summary_path);
        out << "metric                     mean_over_finite   images\n";
        for (const auto& [name, value] : report.aggregate) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%-26s %16.6f %8zu\n", name.c_str(), value,
                          report.ids.size());
            out << buf;
        }
        for (const auto& name : report.failed) {
            out << name << "  FAILED\n";
        }
    }
}

}  // namespace visage

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "visage/conditioning.hpp"
#include "visage/image.hpp"
#include "visage/manifest.hpp"

namespace visage {

// Peak signal-to-noise ratio in dB over all RGB samples (range [0,1]).
// Identical images yield +infinity, reported as a sentinel; aggregation
// skips non-finite entries.
double psnr(const Image& a, const Image& b);

// Windowed structural similarity on the luminance channel: 11x11 Gaussian
// window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1, averaged over all
// positions where the window fits entirely.
double ssim(const Image& a, const Image& b);

// Cosine distance between identity embeddings; 0 for identical images.
double identity_distance(const Image& a, const Image& b, const IdentityEmbedder& embedder);

// Extra full-reference metrics: f(output, target) -> value.
using MetricFn = std::function<double(const Image&, const Image&)>;

class MetricRegistry {
public:
    // Duplicate names — including the built-in metric names — are rejected.
    void register_metric(const std::string& name, MetricFn fn);
    const std::map<std::string, MetricFn>& plugins() const { return plugins_; }

private:
    std::map<std::string, MetricFn> plugins_;
};

struct MetricReport {
    std::vector<std::string> ids;                          // per-record, manifest order
    std::map<std::string, std::vector<double>> per_image;  // metric -> values aligned with ids
    std::map<std::string, double> aggregate;               // mean over finite entries
    std::vector<std::string> failed;                       // plugins that threw
};

// Compare restored outputs (out_dir/<record id>.png) against each record's
// ground-truth image under data_root.  Built-in metrics always run; plugin
// failures are isolated and recorded without failing the report.
MetricReport evaluate_outputs(const std::vector<SampleRecord>& records,
                              const std::string& data_root, const std::string& outputs_dir,
                              const IdentityEmbedder& embedder,
                              const MetricRegistry* plugins = nullptr);

// Serialize a report as line-delimited records plus a readable summary table.
void write_report(const MetricReport& report, const std::string& jsonl_path,
                  const std::string& summary_path);

}  // namespace visage

#include "nara/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "nara/ops.hpp"
#include "nara/parallel.hpp"

namespace nara {

void write_sweep_csv(std::ostream& out, std::span<const SweepRecord> records) {
    out << kSweepCsvHeader << '\n';
    std::ostringstream row;
    row << std::setprecision(17);
    for (const auto& r : records) {
        row.str("");
        row << r.lambda << ',' << r.value << ',' << r.layer << ',' << r.module << ',' << r.method << ',' << r.rep;
        out << row.str() << '\n';
    }
}

void write_sweep_csv(const std::string& path, std::span<const SweepRecord> records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    write_sweep_csv(f, records);
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<SweepRecord> read_sweep_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kSweepCsvHeader) throw std::runtime_error("bad sweep CSV header");
    std::vector<SweepRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw std::runtime_error("bad sweep CSV row: " + line);
        try {
            std::size_t used = 0;
            SweepRecord r;
            r.lambda = std::stod(cells[0], &used);
            if (used != cells[0].size()) throw std::invalid_argument(cells[0]);
            r.value = std::stod(cells[1], &used);
            if (used != cells[1].size()) throw std::invalid_argument(cells[1]);
            r.layer = cells[2];
            r.module = cells[3];
            r.method = cells[4];
            r.rep = std::stoul(cells[5], &used);
            if (used != cells[5].size()) throw std::invalid_argument(cells[5]);
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw std::runtime_error("bad sweep CSV row: " + line);
        }
    }
    return out;
}

std::vector<double> lambda_grid(std::size_t n) {
    if (n < 2) throw std::invalid_argument("lambda grid needs at least 2 points");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

Tensor delta_w(const AdapterState& adapter, ModuleId module, double lambda, const CoreSet& cores) {
    const auto& spec = adapter.spec();
    if (!adapter.active()) throw std::invalid_argument("delta_w: adapter is inactive");
    if (spec.variant == AdapterVariant::MultiLoRA) {
        const auto& p = adapter.pair(module, multi_lora_select(lambda, spec.num_intervals));
        return matmul(p.B, p.A);
    }
    const auto& p = adapter.pair(module);
    if (!spec.uses_core()) return matmul(p.B, p.A);
    const auto g = static_cast<std::size_t>(sharing_resolve(spec.sharing, module));
    if (g >= cores.cores.size()) throw std::invalid_argument("delta_w: missing core for " + module.str());
    return matmul(matmul(p.B, cores.cores[g]), p.A);
}

std::vector<SweepRecord> delta_w_norm_sweep(const AdapterState& adapter, std::span<const double> lambdas,
                                            const std::string& method) {
    NoGradGuard guard;
    std::vector<SweepRecord> out;
    const int L = adapter.layers();
    for (double lambda : lambdas) {
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("sweep lambda outside [0, 1]");
        const CoreSet cores = adapter.spec().uses_core() ? adapter.compute_cores(lambda) : CoreSet{};
        for (auto proj : kProjections) {
            const std::string mod(1, static_cast<char>(std::tolower(to_char(proj))));
            std::vector<double> norms;
            for (int l = 0; l < L; ++l) {
                const auto dw = delta_w(adapter, {l, proj}, lambda, cores);
                double ss = 0.0;
                for (double v : dw.data()) ss += v * v;
                norms.push_back(std::sqrt(ss));
                out.push_back({lambda, norms.back(), std::to_string(l), mod, method, 0});
            }
            const double mean = std::accumulate(norms.begin(), norms.end(), 0.0) / L;
            double var = 0.0;
            for (double v : norms) var += (v - mean) * (v - mean);
            out.push_back({lambda, mean, "mean", mod, method, 0});
            out.push_back({lambda, std::sqrt(var / L), "std", mod, method, 0});
        }
    }
    return out;
}

std::vector<SweepRecord> loss_vs_noise(const ResponseScorer& scorer, std::span<const Sequence> samples,
                                       std::size_t repetitions, std::uint64_t seed, const std::string& method,
                                       const Vocab& vocab) {
    const RngStream root(seed, "loss-vs-noise");
    std::vector<std::vector<SweepRecord>> per(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        NoGradGuard guard;
        RngStream rng = root.substream(i);
        const auto& s = samples[i];
        const std::size_t Ls = s.response.size();
        for (std::size_t rep = 0; rep < repetitions; ++rep) {
            const auto m = static_cast<std::size_t>(std::floor(rng.uniform() * static_cast<double>(Ls)));
            if (m == 0) continue;
            MaskedItem it;
            it.source = s;
            it.draw = mask_exact(s, m, rng, vocab);
            it.t = 1.0;
            const double ce = masked_loss(scorer(it), it).loss.item() / static_cast<double>(m);
            per[i].push_back({it.lambda(), ce, "all", "all", method, rep});
        }
    });
    std::vector<SweepRecord> out;
    for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
    return out;
}

std::vector<SweepRecord> loss_vs_noise(const ModelState& model, const AdapterState* adapter,
                                       std::span<const Sequence> samples, std::size_t repetitions,
                                       std::uint64_t seed, const std::string& method) {
    auto scorer = [&](const MaskedItem& it) {
        const CoreSet cores =
            adapter && adapter->spec().uses_core() ? adapter->compute_cores(it.lambda()) : CoreSet{};
        AdapterBinding bind{adapter, &cores, it.lambda(), nullptr};
        return response_logits(model, it, adapter ? &bind : nullptr);
    };
    return loss_vs_noise(scorer, samples, repetitions, seed, method, model.config().vocab);
}

std::size_t lowess_span(std::size_t n, double fraction) {
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
    return std::clamp<std::size_t>(k, 2, n);
}

LowessCurve lowess(std::span<const double> x, std::span<const double> y, double fraction) {
    const std::size_t n = x.size();
    if (y.size() != n) throw std::invalid_argument("lowess: x and y differ in length");
    if (n < 2) throw std::invalid_argument("lowess: need at least 2 points");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("lowess: fraction must be in (0, 1]");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    LowessCurve c;
    c.fraction = fraction;
    c.x.resize(n);
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.x[i] = x[order[i]];
        ys[i] = y[order[i]];
    }
    const std::size_t k = lowess_span(n, fraction);
    c.y.resize(n);
    std::size_t lo = 0;  // window [lo, lo + k) of the k nearest in sorted order
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = c.x[i];
        while (lo + k < n && xi - c.x[lo] > c.x[lo + k] - xi) ++lo;
        const double h = std::max(xi - c.x[lo], c.x[lo + k - 1] - xi);
        double sw = 0, sx = 0, sy = 0;
        std::vector<double> w(k);
        for (std::size_t j = 0; j < k; ++j) {
            const double d = std::abs(c.x[lo + j] - xi);
            double wj;
            if (h <= 0.0) {
                wj = 1.0;
            } else {
                const double u = d / h;
                wj = u < 1.0 ? std::pow(1.0 - u * u * u, 3) : 0.0;
            }
            w[j] = wj;
            sw += wj;
            sx += wj * c.x[lo + j];
            sy += wj * ys[lo + j];
        }
        const double mx = sx / sw, my = sy / sw;
        double sxx = 0, sxy = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const double dx = c.x[lo + j] - mx;
            sxx += w[j] * dx * dx;
            sxy += w[j] * dx * (ys[lo + j] - my);
        }
        // Degenerate spread (one effective x) falls back to the weighted mean.
        const double scale = std::max(1.0, std::abs(mx));
        c.y[i] = sxx > 1e-12 * scale * scale * sw ? my + sxy / sxx * (xi - mx) : my;
    }
    return c;
}

}  // namespace nara

#include "mixedrc/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "mixedrc/imgops.hpp"
#include "mixedrc/texture.hpp"

namespace mixedrc::eval {

namespace {

constexpr double kPsnrCap = 99.0;

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - b.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double psnr_from_mse(double m) {
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) { return psnr_from_mse(mse(a, b)); }

double psnr(const Clip& a, const Clip& b) {
    if (a.frame_count() != b.frame_count())
        throw std::invalid_argument("psnr: clips have " + std::to_string(a.frame_count()) + " vs " +
                                    std::to_string(b.frame_count()) + " frames");
    if (a.empty()) throw std::invalid_argument("psnr: empty clips");
    double acc = 0.0;
    for (int i = 0; i < a.frame_count(); ++i) acc += mse(a.frames[i], b.frames[i]);
    return psnr_from_mse(acc / a.frame_count());
}

double psnr_luma(const Tensor& a, const Tensor& b) {
    return psnr(texture::luma(a), texture::luma(b));
}

double ssim(const Tensor& a_in, const Tensor& b_in) {
    require_same_shape(a_in, b_in, "ssim");
    const Tensor a = texture::luma(a_in);
    const Tensor b = texture::luma(b_in);
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
    constexpr double kC2 = 0.03 * 0.03;
    const int h = a.h(), w = a.w();
    if (h < kWin || w < kWin)
        throw std::invalid_argument("ssim: frame " + a.shape_str() + " smaller than the 11x11 window");

    const auto k1d = imgops::gaussian_kernel_1d(kSigma, kWin);
    std::array<double, kWin * kWin> win{};
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) win[i * kWin + j] = k1d[i] * k1d[j];

    double total = 0.0;
    int count = 0;
    for (int y = 0; y + kWin <= h; ++y)
        for (int x = 0; x + kWin <= w; ++x) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wv = win[i * kWin + j];
                    mu_a += wv * a.at(0, y + i, x + j);
                    mu_b += wv * b.at(0, y + i, x + j);
                }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wv = win[i * kWin + j];
                    const double da = a.at(0, y + i, x + j) - mu_a;
                    const double db = b.at(0, y + i, x + j) - mu_b;
                    va += wv * da * da;
                    vb += wv * db * db;
                    cov += wv * da * db;
                }
            total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                     ((mu_a * mu_a + mu_b * mu_b + kC1) * (va + vb + kC2));
            ++count;
        }
    return total / count;
}

double ssim(const Clip& a, const Clip& b) {
    if (a.frame_count() != b.frame_count() || a.empty())
        throw std::invalid_argument("ssim: clip frame counts differ or empty");
    double acc = 0.0;
    for (int i = 0; i < a.frame_count(); ++i) acc += ssim(a.frames[i], b.frames[i]);
    return acc / a.frame_count();
}

namespace {

void validate_curve(const RdCurve& c) {
    if (c.points.size() < 4)
        throw std::invalid_argument("bd_rate: curve '" + c.label + "' needs >= 4 points, has " +
                                    std::to_string(c.points.size()));
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        if (c.points[i].bitrate_kbps <= 0.0)
            throw std::invalid_argument("bd_rate: curve '" + c.label + "' has non-positive bitrate");
        if (i > 0 && c.points[i].bitrate_kbps <= c.points[i - 1].bitrate_kbps)
            throw std::invalid_argument("bd_rate: curve '" + c.label + "' bitrates not strictly increasing");
        if (i > 0 && c.points[i].quality <= c.points[i - 1].quality)
            throw std::invalid_argument("bd_rate: curve '" + c.label + "' quality not monotonic in bitrate");
    }
}

// least-squares cubic of log10(rate) over (quality - shift)
std::array<double, 4> fit_cubic(const RdCurve& c, double shift) {
    std::array<std::array<double, 4>, 4> ata{};
    std::array<double, 4> atb{};
    for (const RdPoint& p : c.points) {
        const double q = p.quality - shift;
        const double lr = std::log10(p.bitrate_kbps);
        const std::array<double, 4> row{1.0, q, q * q, q * q * q};
        for (int i = 0; i < 4; ++i) {
            atb[i] += row[i] * lr;
            for (int j = 0; j < 4; ++j) ata[i][j] += row[i] * row[j];
        }
    }
    // Gaussian elimination with partial pivoting
    std::array<std::array<double, 5>, 4> m{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) m[i][j] = ata[i][j];
        m[i][4] = atb[i];
    }
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        std::swap(m[col], m[piv]);
        if (std::abs(m[col][col]) < 1e-14) throw std::runtime_error("bd_rate: singular fit");
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int j = col; j < 5; ++j) m[r][j] -= f * m[col][j];
        }
    }
    std::array<double, 4> coef{};
    for (int i = 0; i < 4; ++i) coef[i] = m[i][4] / m[i][i];
    return coef;
}

double integrate_cubic(const std::array<double, 4>& c, double lo, double hi) {
    auto anti = [&](double q) {
        return c[0] * q + c[1] * q * q / 2.0 + c[2] * q * q * q / 3.0 + c[3] * q * q * q * q / 4.0;
    };
    return anti(hi) - anti(lo);
}

// Fritsch-Carlson monotone slopes for piecewise-cubic-hermite integration
double integrate_pchip(const RdCurve& c, double lo, double hi) {
    const int n = static_cast<int>(c.points.size());
    std::vector<double> q(n), r(n);
    for (int i = 0; i < n; ++i) {
        q[i] = c.points[i].quality;
        r[i] = std::log10(c.points[i].bitrate_kbps);
    }
    std::vector<double> h(n - 1), delta(n - 1), m(n);
    for (int i = 0; i < n - 1; ++i) {
        h[i] = q[i + 1] - q[i];
        delta[i] = (r[i + 1] - r[i]) / h[i];
    }
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for (int i = 1; i < n - 1; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0)
            m[i] = 0.0;
        else {
            const double w1 = 2.0 * h[i] + h[i - 1];
            const double w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    double total = 0.0;
    for (int i = 0; i < n - 1; ++i) {
        const double a = std::max(lo, q[i]);
        const double b = std::min(hi, q[i + 1]);
        if (a >= b) continue;
        // hermite on [q_i, q_{i+1}] integrated over [a, b] via t = (x-q_i)/h
        auto hermite_anti = [&](double t) {
            const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
            const double h00 = t - t3 + t4 / 2.0;
            const double h10 = t2 / 2.0 - 2.0 * t3 / 3.0 + t4 / 4.0;
            const double h01 = t3 - t4 / 2.0;
            const double h11 = -t3 / 3.0 + t4 / 4.0;
            return h[i] * (r[i] * h00 + h[i] * m[i] * h10 + r[i + 1] * h01 + h[i] * m[i + 1] * h11);
        };
        const double ta = (a - q[i]) / h[i];
        const double tb = (b - q[i]) / h[i];
        total += hermite_anti(tb) - hermite_anti(ta);
    }
    return total;
}

}  // namespace

double bd_rate(const RdCurve& anchor, const RdCurve& test, BdVariant variant) {
    validate_curve(anchor);
    validate_curve(test);
    const double lo = std::max(anchor.points.front().quality, test.points.front().quality);
    const double hi = std::min(anchor.points.back().quality, test.points.back().quality);
    if (lo >= hi) throw std::invalid_argument("bd_rate: quality ranges do not overlap");

    double int_anchor = 0.0, int_test = 0.0;
    if (variant == BdVariant::Cubic) {
        const double shift = (lo + hi) / 2.0;
        int_anchor = integrate_cubic(fit_cubic(anchor, shift), lo - shift, hi - shift);
        int_test = integrate_cubic(fit_cubic(test, shift), lo - shift, hi - shift);
    } else {
        int_anchor = integrate_pchip(anchor, lo, hi);
        int_test = integrate_pchip(test, lo, hi);
    }
    const double avg_diff = (int_test - int_anchor) / (hi - lo);
    return (std::pow(10.0, avg_diff) - 1.0) * 100.0;
}

SweepResult rd_sweep(const Clip& src, const SweepConfig& cfg, const std::vector<int>& qps,
                     const Restorer& restorer, chain::CodecAdapter& adapter, const std::string& label) {
    if (qps.size() < 2) throw std::invalid_argument("rd_sweep: need at least 2 QPs");
    src.validate();
    SweepResult result;
    result.curve.label = label;
    for (int qp : qps) {
        chain::MixedStream stream = chain::encode_mixed(src, cfg.scale, cfg.gop_size, qp, cfg.el_qp, adapter);
        const std::size_t total_bytes = chain::serialize(stream).size();
        Clip restored = restorer(stream);
        SweepRow row;
        row.label = label;
        row.qp = qp;
        row.bitrate_kbps = static_cast<double>(total_bytes) * 8.0 * src.fps() / src.frame_count() / 1000.0;
        row.psnr_db = psnr(restored, src);
        row.ssim = ssim(restored, src);
        result.rows.push_back(row);
    }
    result.curve = curve_from_rows(result.rows);
    return result;
}

RdCurve curve_from_rows(const std::vector<SweepRow>& rows, const std::string& metric) {
    RdCurve curve;
    if (!rows.empty()) curve.label = rows.front().label;
    for (const SweepRow& r : rows)
        curve.points.push_back({r.bitrate_kbps, metric == "ssim" ? r.ssim : r.psnr_db});
    std::sort(curve.points.begin(), curve.points.end(),
              [](const RdPoint& a, const RdPoint& b) { return a.bitrate_kbps < b.bitrate_kbps; });
    return curve;
}

void write_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << "label,qp,bitrate_kbps,psnr_db,ssim\n";
    f.precision(10);
    for (const SweepRow& r : rows)
        f << r.label << "," << r.qp << "," << r.bitrate_kbps << "," << r.psnr_db << "," << r.ssim << "\n";
}

std::vector<SweepRow> read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("csv '" + path + "': empty file");
    if (line.rfind("label,qp,bitrate_kbps,psnr_db,ssim", 0) != 0)
        throw std::runtime_error("csv '" + path + "': unexpected header '" + line + "'");
    std::vector<SweepRow> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        SweepRow r;
        std::string field;
        std::getline(ls, r.label, ',');
        std::getline(ls, field, ',');
        r.qp = std::stoi(field);
        std::getline(ls, field, ',');
        r.bitrate_kbps = std::stod(field);
        std::getline(ls, field, ',');
        r.psnr_db = std::stod(field);
        std::getline(ls, field, ',');
        r.ssim = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_json(const std::string& path, const std::vector<SweepRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const SweepRow& r : rows)
        j.push_back({{"label", r.label},
                     {"qp", r.qp},
                     {"bitrate_kbps", r.bitrate_kbps},
                     {"psnr_db", r.psnr_db},
                     {"ssim", r.ssim}});
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << j.dump(2) << "\n";
}

}  // namespace mixedrc::eval

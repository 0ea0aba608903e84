#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mixedrc/chain.hpp"
#include "mixedrc/tensor.hpp"

namespace mixedrc::eval {

// 10*log10(1/MSE) in the [0,1] float domain, capped at 99 dB for identical
// inputs. The clip overload averages per-frame MSE before the log.
double psnr(const Tensor& a, const Tensor& b);
double psnr(const Clip& a, const Clip& b);

// PSNR on the BT.601 luma plane (identity for single-channel frames).
double psnr_luma(const Tensor& a, const Tensor& b);

// Windowed SSIM on the luma plane: 11x11 Gaussian sigma=1.5, K1=0.01,
// K2=0.03, dynamic range 1.0, mean over fully interior windows.
double ssim(const Tensor& a, const Tensor& b);
double ssim(const Clip& a, const Clip& b);

struct RdPoint {
    double bitrate_kbps = 0.0;
    double quality = 0.0;
};

struct RdCurve {
    std::string label;
    std::vector<RdPoint> points;  // strictly increasing bitrate
};

enum class BdVariant { Cubic, Pchip };

// Bjontegaard delta rate in percent; negative means the test curve saves
// bitrate at equal quality.
double bd_rate(const RdCurve& anchor, const RdCurve& test, BdVariant variant = BdVariant::Cubic);

struct SweepRow {
    std::string label;
    int qp = 0;
    double bitrate_kbps = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct SweepResult {
    RdCurve curve;  // PSNR as quality, sorted by bitrate
    std::vector<SweepRow> rows;
};

struct SweepConfig {
    int scale = 2;
    int gop_size = 16;
    int el_qp = 28;
};

using Restorer = std::function<Clip(const chain::MixedStream&)>;

// Encodes/decodes/restores the clip at every QP; bitrate counts all
// container bytes.
SweepResult rd_sweep(const Clip& src, const SweepConfig& cfg, const std::vector<int>& qps,
                     const Restorer& restorer, chain::CodecAdapter& adapter, const std::string& label);

// CSV schema: label,qp,bitrate_kbps,psnr_db,ssim
void write_csv(const std::string& path, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_csv(const std::string& path);
void write_json(const std::string& path, const std::vector<SweepRow>& rows);
RdCurve curve_from_rows(const std::vector<SweepRow>& rows, const std::string& metric = "psnr");

}  // namespace mixedrc::eval

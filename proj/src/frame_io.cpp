#include "mixedrc/frame_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mixedrc/bytes.hpp"

namespace fs = std::filesystem;

namespace mixedrc::bytes {

void write_file(const std::string& path, const std::vector<uint8_t>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    const std::streamsize size = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> data(static_cast<std::size_t>(size));
    f.read(reinterpret_cast<char*>(data.data()), size);
    if (!f) throw std::runtime_error("read from '" + path + "' failed");
    return data;
}

}  // namespace mixedrc::bytes

namespace mixedrc::frame_io {

namespace {

uint8_t to_u8(float v) {
    return static_cast<uint8_t>(std::clamp(static_cast<int>(std::lround(v * 255.0f)), 0, 255));
}

void write_plane_u8(std::ofstream& f, const float* p, std::size_t n) {
    std::vector<uint8_t> row(n);
    for (std::size_t i = 0; i < n; ++i) row[i] = to_u8(p[i]);
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
}

}  // namespace

void write_y4m(const std::string& path, const Clip& clip, const std::string& format) {
    clip.validate();
    const Tensor& f0 = clip.frames.front();
    std::string fmt = format;
    if (fmt.empty()) fmt = f0.c() == 1 ? "mono" : "444";
    if (fmt == "mono" && f0.c() != 1) throw std::invalid_argument("y4m: mono output needs a 1-channel clip");
    if ((fmt == "444" || fmt == "420") && f0.c() != 3)
        throw std::invalid_argument("y4m: " + fmt + " output needs a 3-channel clip");
    if (fmt == "420" && (f0.h() % 2 != 0 || f0.w() % 2 != 0))
        throw std::invalid_argument("y4m: 420 output needs even dimensions");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << "YUV4MPEG2 W" << f0.w() << " H" << f0.h() << " F" << clip.fps_num << ":" << clip.fps_den << " Ip A1:1 C"
      << (fmt == "mono" ? "mono" : fmt) << "\n";

    const std::size_t plane_n = static_cast<std::size_t>(f0.h()) * f0.w();
    for (const Tensor& frame : clip.frames) {
        f << "FRAME\n";
        if (fmt == "mono") {
            write_plane_u8(f, frame.plane(0), plane_n);
        } else if (fmt == "444") {
            for (int c = 0; c < 3; ++c) write_plane_u8(f, frame.plane(c), plane_n);
        } else {  // 420: average 2x2 chroma
            write_plane_u8(f, frame.plane(0), plane_n);
            for (int c = 1; c < 3; ++c) {
                std::vector<uint8_t> half(plane_n / 4);
                const int hw = f0.w() / 2;
                for (int y = 0; y < f0.h() / 2; ++y)
                    for (int x = 0; x < hw; ++x) {
                        const float s = frame.at(c, 2 * y, 2 * x) + frame.at(c, 2 * y, 2 * x + 1) +
                                        frame.at(c, 2 * y + 1, 2 * x) + frame.at(c, 2 * y + 1, 2 * x + 1);
                        half[static_cast<std::size_t>(y) * hw + x] = to_u8(s / 4.0f);
                    }
                f.write(reinterpret_cast<const char*>(half.data()), static_cast<std::streamsize>(half.size()));
            }
        }
    }
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

Clip read_y4m(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::string header;
    std::getline(f, header);
    if (header.rfind("YUV4MPEG2", 0) != 0) throw std::runtime_error("'" + path + "' is not a Y4M file");

    int w = 0, h = 0, fn = 30, fd = 1;
    std::string cs = "420";
    std::istringstream hs(header);
    std::string tok;
    hs >> tok;  // YUV4MPEG2
    while (hs >> tok) {
        if (tok.size() < 2) continue;
        switch (tok[0]) {
            case 'W': w = std::stoi(tok.substr(1)); break;
            case 'H': h = std::stoi(tok.substr(1)); break;
            case 'F': {
                const auto colon = tok.find(':');
                fn = std::stoi(tok.substr(1, colon - 1));
                fd = std::stoi(tok.substr(colon + 1));
                break;
            }
            case 'C': cs = tok.substr(1); break;
            default: break;
        }
    }
    if (w < 1 || h < 1) throw std::runtime_error("y4m '" + path + "': missing W/H");

    enum class Fmt { Mono, C444, C420 } fmt;
    if (cs == "mono") fmt = Fmt::Mono;
    else if (cs == "444") fmt = Fmt::C444;
    else if (cs.rfind("420", 0) == 0) fmt = Fmt::C420;
    else throw std::runtime_error("y4m '" + path + "': unsupported colorspace C" + cs);

    const std::size_t plane_n = static_cast<std::size_t>(w) * h;
    Clip clip;
    clip.fps_num = fn;
    clip.fps_den = fd;
    std::string line;
    while (std::getline(f, line)) {
        if (line.rfind("FRAME", 0) != 0) throw std::runtime_error("y4m '" + path + "': malformed frame marker");
        const int channels = fmt == Fmt::Mono ? 1 : 3;
        Tensor frame = Tensor::chw(channels, h, w);
        std::vector<uint8_t> buf(plane_n);
        auto read_plane = [&](float* dst, std::size_t n, std::vector<uint8_t>& b) {
            b.resize(n);
            f.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(n));
            if (static_cast<std::size_t>(f.gcount()) != n)
                throw std::runtime_error("y4m '" + path + "': truncated frame payload");
            for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(b[i]) / 255.0f;
        };
        read_plane(frame.plane(0), plane_n, buf);
        if (fmt == Fmt::C444) {
            read_plane(frame.plane(1), plane_n, buf);
            read_plane(frame.plane(2), plane_n, buf);
        } else if (fmt == Fmt::C420) {
            const int hw = (w + 1) / 2, hh = (h + 1) / 2;
            std::vector<float> half(static_cast<std::size_t>(hw) * hh);
            for (int c = 1; c < 3; ++c) {
                read_plane(half.data(), half.size(), buf);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        frame.at(c, y, x) = half[static_cast<std::size_t>(y / 2) * hw + x / 2];
            }
        }
        clip.frames.push_back(std::move(frame));
    }
    if (clip.frames.empty()) throw std::runtime_error("y4m '" + path + "': no frames");
    return clip;
}

void write_png(const std::string& path, const Tensor& frame) {
    require_frame(frame, "write_png");
    if (frame.c() != 1 && frame.c() != 3)
        throw std::invalid_argument("write_png: expected 1 or 3 channels, got " + std::to_string(frame.c()));

    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(frame.w());
    image.height = static_cast<png_uint_32>(frame.h());
    image.format = frame.c() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;

    const int stride = frame.w() * frame.c();
    std::vector<uint8_t> rows(static_cast<std::size_t>(stride) * frame.h());
    for (int y = 0; y < frame.h(); ++y)
        for (int x = 0; x < frame.w(); ++x)
            for (int c = 0; c < frame.c(); ++c)
                rows[static_cast<std::size_t>(y) * stride + x * frame.c() + c] = to_u8(frame.at(c, y, x));

    if (!png_image_write_to_file(&image, path.c_str(), 0, rows.data(), stride, nullptr))
        throw std::runtime_error("write_png '" + path + "': " + image.message);
}

Tensor read_png(const std::string& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("read_png '" + path + "': " + image.message);

    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const int channels = gray ? 1 : 3;
    const int stride = static_cast<int>(image.width) * channels;
    std::vector<uint8_t> rows(static_cast<std::size_t>(stride) * image.height);
    if (!png_image_finish_read(&image, nullptr, rows.data(), stride, nullptr))
        throw std::runtime_error("read_png '" + path + "': " + image.message);

    Tensor frame = Tensor::chw(channels, static_cast<int>(image.height), static_cast<int>(image.width));
    for (int y = 0; y < frame.h(); ++y)
        for (int x = 0; x < frame.w(); ++x)
            for (int c = 0; c < channels; ++c)
                frame.at(c, y, x) =
                    static_cast<float>(rows[static_cast<std::size_t>(y) * stride + x * channels + c]) / 255.0f;
    return frame;
}

void write_png_sequence(const std::string& dir, const Clip& clip, const std::string& prefix) {
    clip.validate();
    fs::create_directories(dir);
    for (int i = 0; i < clip.frame_count(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s%06d.png", prefix.c_str(), i);
        write_png((fs::path(dir) / name).string(), clip.frames[i]);
    }
}

Clip read_png_sequence(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().string());
    if (names.empty()) throw std::runtime_error("'" + dir + "' contains no PNG frames");
    std::sort(names.begin(), names.end());
    Clip clip;
    for (const auto& n : names) clip.frames.push_back(read_png(n));
    clip.validate();
    return clip;
}

Clip read_clip(const std::string& path) {
    if (fs::is_directory(path)) return read_png_sequence(path);
    if (fs::path(path).extension() == ".y4m") return read_y4m(path);
    throw std::runtime_error("cannot read clip from '" + path + "': expected .y4m file or PNG directory");
}

void write_clip(const std::string& path, const Clip& clip) {
    if (fs::path(path).extension() == ".y4m")
        write_y4m(path, clip);
    else
        write_png_sequence(path, clip);
}

}  // namespace mixedrc::frame_io

#pragma once

#include <string>

#include "mixedrc/tensor.hpp"

namespace mixedrc::frame_io {

// Y4M: mono clips write Cmono, 3-channel clips C444 by default. C420*
// variants are read with nearest-neighbor chroma upsampling; "420" as
// write format averages 2x2 chroma blocks.
void write_y4m(const std::string& path, const Clip& clip, const std::string& format = "");
Clip read_y4m(const std::string& path);

// 8-bit gray or RGB PNG.
void write_png(const std::string& path, const Tensor& frame);
Tensor read_png(const std::string& path);

// zero-padded frame_%06d.png sequences
void write_png_sequence(const std::string& dir, const Clip& clip, const std::string& prefix = "frame_");
Clip read_png_sequence(const std::string& dir);

// Dispatch on extension/layout: .y4m file or a directory of PNG frames.
Clip read_clip(const std::string& path);
void write_clip(const std::string& path, const Clip& clip);

}  // namespace mixedrc::frame_io

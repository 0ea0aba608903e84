#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mixedrc/r3n.hpp"
#include "mixedrc/tensor.hpp"

namespace mixedrc::chain {

struct GopLayout {
    int gop_size = 16;
    int scale = 2;
    int frame_count = 0;
    int width = 0;   // original HR dimensions, before padding to a multiple of scale
    int height = 0;

    int gop_count() const { return (frame_count + gop_size - 1) / gop_size; }
};

struct GopRecord {
    std::vector<uint8_t> el;  // encoded full-resolution I-frame
    std::vector<uint8_t> bl;  // encoded LR GOP
};

// Dual-bitstream container: base layer carries the LR GOPs, enhancement
// layer one full-resolution intra frame per GOP.
struct MixedStream {
    uint8_t version = 1;
    GopLayout layout;
    uint8_t codec_id = 0;
    std::vector<uint8_t> codec_params;
    std::vector<GopRecord> gops;
};

class CodecAdapter {
public:
    virtual ~CodecAdapter() = default;
    virtual uint8_t id() const = 0;
    virtual std::vector<uint8_t> encode(const Clip& clip, int qp) = 0;
    virtual Clip decode(const std::vector<uint8_t>& data) = 0;
};

class ToyCodecAdapter : public CodecAdapter {
public:
    uint8_t id() const override { return 0; }
    std::vector<uint8_t> encode(const Clip& clip, int qp) override;
    Clip decode(const std::vector<uint8_t>& data) override;
};

// Shell-out adapter for external encoders/decoders. Templates receive
// {in}, {out}, {qp}, {w}, {h}; frames are materialized as Y4M.
struct ExternalCodecSpec {
    std::string encode_cmd;
    std::string decode_cmd;
    std::string y4m_format;  // "", "mono", "444", "420"
};

class ExternalCodecAdapter : public CodecAdapter {
public:
    explicit ExternalCodecAdapter(ExternalCodecSpec spec) : spec_(std::move(spec)) {}
    uint8_t id() const override { return 1; }
    std::vector<uint8_t> encode(const Clip& clip, int qp) override;
    Clip decode(const std::vector<uint8_t>& data) override;

private:
    ExternalCodecSpec spec_;
};

// Replaces every {key} from subs; throws if a known placeholder survives.
std::string substitute_placeholders(const std::string& tmpl, const std::map<std::string, std::string>& subs);

// Runs a substituted command via the shell; on nonzero exit throws with the
// captured stderr. Returns the bytes of the {out} file.
std::vector<uint8_t> external_adapter_run(const std::string& tmpl, const std::map<std::string, std::string>& subs);

MixedStream encode_mixed(const Clip& hr, int scale, int gop_size, int base_qp, int el_qp, CodecAdapter& adapter);

struct DecodedMixed {
    Clip lr;                   // at padded-HR/scale resolution
    std::vector<Tensor> refs;  // one padded HR frame per GOP
    GopLayout layout;
};

DecodedMixed decode_mixed(const MixedStream& stream, CodecAdapter& adapter);

// Runs the restoration model over every frame; windows are replicate-padded
// at clip edges, each frame is paired with its GOP's reference frame.
Clip restore_stream(const MixedStream& stream, r3n::ModelParams& params, const r3n::R3NConfig& cfg,
                    CodecAdapter& adapter);

// Baseline: decode the base layer and upscale bicubically.
Clip bicubic_restore(const MixedStream& stream, CodecAdapter& adapter);

std::vector<uint8_t> serialize(const MixedStream& stream);
MixedStream deserialize(const std::vector<uint8_t>& data);
void write_stream(const std::string& path, const MixedStream& stream);
MixedStream read_stream(const std::string& path);

}  // namespace mixedrc::chain

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "uvfuse/deform.hpp"
#include "uvfuse/io.hpp"
#include "uvfuse/splat.hpp"

namespace uvfuse::cli {

namespace fs = std::filesystem;

/// Writes template mesh.obj, labels.txt, target.obj, cam_k.txt,
/// normal_k.pfm, gbuffer_k/, features_k.uvt, landmarks.txt, basis.uvt and
/// views.json into out_dir.
void synth(const io::KeyValues& spec, std::uint64_t seed, const fs::path& out_dir);

void deform(const fs::path& mesh, const fs::path& labels, const fs::path& views, const fs::path& landmarks,
            const deform::DeformConfig& config, const fs::path& out, const fs::path& trace);

/// Writes fused.uvt, weight.uvt, fused.png and weight.png into out_dir.
void splat(const fs::path& views, const splat::FusionConfig& config, const fs::path& out_dir);

void anchor(const fs::path& mesh, const fs::path& uvmap, const fs::path& out);

void render(const fs::path& splats, const fs::path& camera, const fs::path& out);

/// Prints the pass/fail table; returns true when every check passes.
bool gradcheck(const std::string& suite, std::uint64_t seed);

/// synth -> deform -> splat -> anchor -> render. The --spec file carries the
/// scene keys plus deform and fusion overrides and an optional `seed`.
void pipeline(const fs::path& spec, const fs::path& out_dir);

}  // namespace uvfuse::cli

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "commands.hpp"
#include "uvfuse/error.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kFailure = 1;

}  // namespace

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  using namespace uvfuse;

  CLI::App app{"uvfuse: multi-view UV feature fusion and normal-guided mesh deformation"};
  app.require_subcommand(1);

  std::string spec, out_dir, mesh, labels, views, landmarks, config, out, trace, uvmap, splats, camera, suite = "all";
  std::uint64_t seed = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  synth->add_option("--spec", spec, "Scene spec (key=value)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out-dir", out_dir, "Output folder")->required();
  synth->add_option("--seed", seed, "Feature-noise seed");

  auto* deform = app.add_subcommand("deform", "Fit per-vertex offsets to normal maps and landmarks");
  deform->add_option("--mesh", mesh)->required()->check(CLI::ExistingFile);
  deform->add_option("--labels", labels)->required()->check(CLI::ExistingFile);
  deform->add_option("--views", views)->required()->check(CLI::ExistingFile);
  deform->add_option("--landmarks", landmarks)->required()->check(CLI::ExistingFile);
  deform->add_option("--config", config)->check(CLI::ExistingFile);
  deform->add_option("--out", out)->required();
  deform->add_option("--trace", trace)->required();

  auto* splat = app.add_subcommand("splat", "Fuse per-view features into a UV map");
  splat->add_option("--views", views)->required()->check(CLI::ExistingFile);
  splat->add_option("--config", config)->check(CLI::ExistingFile);
  splat->add_option("--out-dir", out_dir)->required();

  auto* anchor = app.add_subcommand("anchor", "Anchor Gaussian splats to a mesh");
  anchor->add_option("--mesh", mesh)->required()->check(CLI::ExistingFile);
  anchor->add_option("--uvmap", uvmap, "H x W x 5 attributes (r, g, b, opacity, scale)")
      ->required()
      ->check(CLI::ExistingFile);
  anchor->add_option("--out", out)->required();

  auto* render = app.add_subcommand("render", "Render anchored splats from a camera");
  render->add_option("--splats", splats)->required()->check(CLI::ExistingFile);
  render->add_option("--camera", camera)->required()->check(CLI::ExistingFile);
  render->add_option("--out", out)->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the invariant suite");
  gradcheck->add_option("--suite", suite)->check(CLI::IsMember({"adjoint", "fd", "oracle", "partition", "all"}));
  gradcheck->add_option("--seed", seed);

  auto* pipeline = app.add_subcommand("pipeline", "synth, deform, splat, anchor and render in one run");
  pipeline->add_option("--spec", spec)->required()->check(CLI::ExistingFile);
  pipeline->add_option("--out-dir", out_dir, "Output folder (default: current folder)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsageError;
  }

  try {
    if (*synth) {
      cli::synth(io::load_key_values(spec), seed, out_dir);
    } else if (*deform) {
      const auto cfg = config.empty() ? deform::DeformConfig{} : [&] {
        const auto kv = io::load_key_values(config);
        io::check_keys(kv, {"lambda_nml", "lambda_lmk", "lambda_lap", "lr", "iters", "reraster_every",
                            "symmetry_weight", "targets_in_camera_space", "w_face", "w_hair", "w_boundary",
                            "w_other"});
        return io::deform_config(kv);
      }();
      cli::deform(mesh, labels, views, landmarks, cfg, out, trace);
    } else if (*splat) {
      const auto cfg = config.empty() ? splat::FusionConfig{} : [&] {
        const auto kv = io::load_key_values(config);
        io::check_keys(kv, {"gamma", "epsilon", "base_res", "num_levels", "density_tau", "mode"});
        return io::fusion_config(kv);
      }();
      cli::splat(views, cfg, out_dir);
    } else if (*anchor) {
      cli::anchor(mesh, uvmap, out);
    } else if (*render) {
      cli::render(splats, camera, out);
    } else if (*gradcheck) {
      return cli::gradcheck(suite, seed) ? 0 : kFailure;
    } else if (*pipeline) {
      cli::pipeline(spec, out_dir.empty() ? fs::path(".") : fs::path(out_dir));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return 0;
}

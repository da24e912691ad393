#include "resplat/video.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "resplat/metrics.hpp"
#include "resplat/ssim.hpp"

namespace resplat {

namespace fs = std::filesystem;
using nlohmann::json;

void Video::validate() const {
  if (frames.empty()) throw NumericError("video has no frames");
  if (azimuths.size() != frames.size())
    throw NumericError("video azimuth count does not match frame count");
  for (const Image& f : frames) {
    f.validate();
    if (f.width != width() || f.height != height())
      throw NumericError("video frames have mixed sizes");
  }
  for (double a : azimuths)
    if (!std::isfinite(a)) throw NumericError("video azimuth not finite");
  if (cyclic) {
    if (frames.size() < 2)
      throw NumericError("cyclic video needs at least two frames");
    if (frames.back().data != frames.front().data)
      throw NumericError("cyclic video's last frame differs from its first");
    if (azimuths.back() != azimuths.front())
      throw NumericError("cyclic video's last azimuth differs from its first");
  }
}

void Video::quantize(int bit_depth) {
  for (Image& f : frames) f.quantize(bit_depth);
}

Video make_cyclic(const Video& v) {
  v.validate();
  if (v.cyclic) throw NumericError("video is already cyclic");
  Video out = v;
  out.frames.push_back(out.frames.front());
  out.azimuths.push_back(out.azimuths.front());
  out.cyclic = true;
  return out;
}

Video strip_cycle(const Video& v) {
  v.validate();  // rejects a tampered closing frame
  if (!v.cyclic) throw NumericError("video is not cyclic");
  Video out;
  out.frames.assign(v.frames.begin(), v.frames.end() - 1);
  out.azimuths.assign(v.azimuths.begin(), v.azimuths.end() - 1);
  out.cyclic = false;
  return out;
}

Video render_ring(const GaussianScene& scene, const RingRig& rig,
                  const RenderSettings& settings) {
  Video v;
  v.azimuths = ring_azimuths(rig);
  v.frames.reserve(v.azimuths.size());
  for (const CameraPose& pose : ring_poses(rig))
    v.frames.push_back(render(scene, pose, settings).image);
  v.validate();
  return v;
}

namespace {
void check_comparable(const Video& a, const Video& b) {
  a.validate();
  b.validate();
  if (a.n_frames() != b.n_frames())
    throw NumericError("video metric: frame count mismatch");
}
}  // namespace

double video_psnr(const Video& a, const Video& b) {
  check_comparable(a, b);
  double acc = 0.0;
  for (int i = 0; i < a.n_frames(); ++i) acc += psnr(a.frames[i], b.frames[i]);
  return acc / a.n_frames();
}

double video_ssim(const Video& a, const Video& b) {
  check_comparable(a, b);
  double acc = 0.0;
  for (int i = 0; i < a.n_frames(); ++i) acc += ssim(a.frames[i], b.frames[i]);
  return acc / a.n_frames();
}

void save_video(const std::string& dir, const Video& v, int bit_depth) {
  v.validate();
  fs::create_directories(dir);
  for (int i = 0; i < v.n_frames(); ++i) {
    char name[32];
    snprintf(name, sizeof(name), "frame_%04d.png", i);
    write_png((fs::path(dir) / name).string(), v.frames[i], bit_depth);
  }
  json manifest;
  manifest["format"] = "video-dir";
  manifest["version"] = 1;
  manifest["n_frames"] = v.n_frames();
  manifest["cyclic"] = v.cyclic;
  manifest["width"] = v.width();
  manifest["height"] = v.height();
  manifest["bit_depth"] = bit_depth;
  manifest["azimuths"] = v.azimuths;
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw StageError("cannot write video manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

Video load_video(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw StageError("missing video manifest in " + dir);
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    throw StageError("bad video manifest in " + dir + ": " + e.what());
  }
  if (manifest.value("format", "") != "video-dir")
    throw StageError("not a video directory: " + dir);
  const int n = manifest.at("n_frames").get<int>();
  if (n <= 0) throw StageError("video manifest has no frames: " + dir);
  Video v;
  v.cyclic = manifest.at("cyclic").get<bool>();
  v.azimuths = manifest.at("azimuths").get<std::vector<double>>();
  v.frames.reserve(n);
  for (int i = 0; i < n; ++i) {
    char name[32];
    snprintf(name, sizeof(name), "frame_%04d.png", i);
    v.frames.push_back(read_png((fs::path(dir) / name).string()));
  }
  v.validate();
  return v;
}

}  // namespace resplat

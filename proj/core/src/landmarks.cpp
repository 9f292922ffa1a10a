#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "ctxforest/distance.hpp"
#include "ctxforest/error.hpp"

namespace ctxforest {

double distance_to_landmark(WorldPoint p, const LandmarkSet& landmarks, std::size_t index) {
  if (index >= landmarks.points.size()) {
    throw ValidationError("landmark index " + std::to_string(index) + " out of range for bone " +
                          std::to_string(landmarks.bone));
  }
  return (p - landmarks.points[index]).norm();
}

void save_landmarks(const std::vector<LandmarkSet>& sets, const std::filesystem::path& path) {
  std::string out = "bone,index,x_mm,y_mm,z_mm\n";
  char line[160];
  for (const auto& set : sets) {
    for (std::size_t i = 0; i < set.points.size(); ++i) {
      const auto& p = set.points[i];
      std::snprintf(line, sizeof line, "%u,%zu,%.17g,%.17g,%.17g\n", static_cast<unsigned>(set.bone), i, p.x, p.y,
                    p.z);
      out += line;
    }
  }
  detail::write_file(path.string(), out);
}

std::vector<LandmarkSet> load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open landmark file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("bone,index,x_mm,y_mm,z_mm", 0) != 0) {
    throw IoError("landmark file " + path.string() + " lacks header bone,index,x_mm,y_mm,z_mm");
  }
  std::map<int, LandmarkSet> by_bone;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    int bone = 0;
    std::size_t index = 0;
    WorldPoint p;
    if (!(row >> bone >> index >> p.x >> p.y >> p.z) || bone < 0 || bone > 255) {
      throw IoError("malformed landmark row at line " + std::to_string(line_no));
    }
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ValidationError("non-finite landmark at line " + std::to_string(line_no));
    }
    auto& set = by_bone[bone];
    set.bone = static_cast<std::uint8_t>(bone);
    if (index != set.points.size()) {
      throw ValidationError("landmark indices for bone " + std::to_string(bone) + " must be contiguous from 0");
    }
    set.points.push_back(p);
  }
  std::vector<LandmarkSet> out;
  for (auto& [bone, set] : by_bone) out.push_back(std::move(set));
  return out;
}

}  // namespace ctxforest

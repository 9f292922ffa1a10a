#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "ctxforest/error.hpp"
#include "ctxforest/volume.hpp"

namespace ctxforest {

namespace {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_vec(Vec3 v) { return format_double(v.x) + " " + format_double(v.y) + " " + format_double(v.z); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Header {
  Geometry geometry;
  std::string element_type;
  std::string data_file;
  std::string palette;
};

void write_header(const fs::path& header_path, const Geometry& g, std::string_view element_type,
                  const std::string& palette_line) {
  std::ostringstream h;
  h << "NDims = 3\n";
  h << "DimSize = " << g.dims.nx << ' ' << g.dims.ny << ' ' << g.dims.nz << '\n';
  h << "ElementSpacing = " << format_vec(g.spacing) << '\n';
  h << "Offset = " << format_vec(g.origin) << '\n';
  h << "ElementType = " << element_type << '\n';
  if (!palette_line.empty()) h << "LabelPalette = " << palette_line << '\n';
  h << "ElementDataFile = " << header_path.stem().string() << ".raw\n";
  detail::write_file(header_path.string(), h.str());
}

Vec3 parse_vec(const std::string& value, std::string_view key) {
  std::istringstream in(value);
  Vec3 v;
  if (!(in >> v.x >> v.y >> v.z)) throw IoError("malformed header: bad " + std::string(key));
  return v;
}

Header read_header(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw IoError("cannot open " + header_path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed header: line without '=' in " + header_path.string());
    kv[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }
  for (const char* key : {"NDims", "DimSize", "ElementSpacing", "ElementType", "ElementDataFile"}) {
    if (!kv.contains(key)) throw IoError(std::string("malformed header: missing ") + key);
  }
  if (kv["NDims"] != "3") throw IoError("malformed header: only NDims = 3 is supported");

  Header h;
  {
    std::istringstream dims(kv["DimSize"]);
    if (!(dims >> h.geometry.dims.nx >> h.geometry.dims.ny >> h.geometry.dims.nz)) {
      throw IoError("malformed header: bad DimSize");
    }
  }
  h.geometry.spacing = parse_vec(kv["ElementSpacing"], "ElementSpacing");
  if (kv.contains("Offset")) h.geometry.origin = parse_vec(kv["Offset"], "Offset");
  try {
    validate_geometry(h.geometry);
  } catch (const ValidationError& e) {
    throw IoError(std::string("malformed header: ") + e.what());
  }
  h.element_type = kv["ElementType"];
  h.data_file = kv["ElementDataFile"];
  if (kv.contains("LabelPalette")) h.palette = kv["LabelPalette"];
  return h;
}

std::string read_payload(const fs::path& header_path, const Header& h, std::size_t element_size) {
  const fs::path raw = header_path.parent_path() / h.data_file;
  std::string bytes = detail::read_file(raw.string());
  if (bytes.size() != h.geometry.size() * element_size) throw IoError("data length mismatch in " + raw.string());
  return bytes;
}

}  // namespace

void save_volume(const Volume& v, const fs::path& header_path) {
  write_header(header_path, v.geometry(), "FLOAT32", "");
  const auto data = v.data();
  detail::write_file((header_path.parent_path() / (header_path.stem().string() + ".raw")).string(),
                     std::string_view(reinterpret_cast<const char*>(data.data()), data.size_bytes()));
}

Volume load_volume(const fs::path& header_path) {
  const Header h = read_header(header_path);
  if (h.element_type != "FLOAT32") {
    throw IoError("unsupported element type '" + h.element_type + "' (expected FLOAT32)");
  }
  const std::string bytes = read_payload(header_path, h, sizeof(float));
  std::vector<float> data(h.geometry.size());
  std::memcpy(data.data(), bytes.data(), bytes.size());
  return Volume(h.geometry, std::move(data));
}

void save_label_volume(const LabelVolume& v, const fs::path& header_path) {
  std::string palette;
  for (const auto& [label, name] : v.palette()) {
    if (!palette.empty()) palette += ' ';
    palette += std::to_string(label) + ':' + name;
  }
  write_header(header_path, v.geometry(), "UINT8", palette);
  const auto data = v.data();
  detail::write_file((header_path.parent_path() / (header_path.stem().string() + ".raw")).string(),
                     std::string_view(reinterpret_cast<const char*>(data.data()), data.size_bytes()));
}

LabelVolume load_label_volume(const fs::path& header_path) {
  const Header h = read_header(header_path);
  if (h.element_type != "UINT8") {
    throw IoError("unsupported element type '" + h.element_type + "' (expected UINT8)");
  }
  const std::string bytes = read_payload(header_path, h, 1);
  std::vector<std::uint8_t> labels(bytes.begin(), bytes.end());

  Palette palette;
  std::istringstream entries(h.palette);
  for (std::string entry; entries >> entry;) {
    const auto colon = entry.find(':');
    int label = -1;
    if (colon == std::string::npos ||
        std::from_chars(entry.data(), entry.data() + colon, label).ec != std::errc{} || label < 0 || label > 255) {
      throw IoError("malformed header: bad LabelPalette entry '" + entry + "'");
    }
    palette[static_cast<std::uint8_t>(label)] = entry.substr(colon + 1);
  }
  if (h.palette.empty()) {
    for (auto l : labels) palette.try_emplace(l, "label_" + std::to_string(l));
  }
  return LabelVolume(h.geometry, std::move(labels), std::move(palette));
}

}  // namespace ctxforest

#include "fusionnet/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fusionnet {
namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const fs::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

std::string next_token(std::istream& in, const fs::path& path) {
  std::string token;
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(ch);
  }
  if (token.empty()) fail(path, "truncated PGM header");
  return token;
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  const std::string magic = next_token(in, path);
  if (magic == "P6" || magic == "P3") fail(path, "colour PPM is not a grayscale image");
  if (magic != "P5") fail(path, "unsupported PNM variant '" + magic + "' (expected binary P5)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token(in, path));
    height = std::stoi(next_token(in, path));
    maxval = std::stoi(next_token(in, path));
  } catch (const std::logic_error&) {
    fail(path, "malformed PGM header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) fail(path, "invalid PGM header values");
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) fail(path, "truncated PGM pixel data");
  Image img(height, width);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const unsigned v = bytes_per == 2 ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
    img.values[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return img;
}

Image read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) fail(path, std::string("PNG decode: ") + image.message);
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  if (colour) {
    png_image_free(&image);
    fail(path, "colour PNG is not a grayscale image");
  }
  const bool wide = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  image.format = wide ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height;
  Image img(static_cast<int>(image.height), static_cast<int>(image.width));
  if (wide) {
    std::vector<png_uint_16> buffer(count);
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
      fail(path, std::string("PNG decode: ") + image.message);
    }
    for (std::size_t i = 0; i < count; ++i) img.values[i] = static_cast<float>(buffer[i]) / 65535.0f;
  } else {
    std::vector<png_byte> buffer(count);
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
      fail(path, std::string("PNG decode: ") + image.message);
    }
    for (std::size_t i = 0; i < count; ++i) img.values[i] = static_cast<float>(buffer[i]) / 255.0f;
  }
  return img;
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

unsigned quantize(float v, unsigned maxval) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<unsigned>(std::lround(c * maxval));
}

}  // namespace

Image read_image(const fs::path& path) {
  if (!fs::exists(path)) fail(path, "file does not exist");
  std::ifstream probe(path, std::ios::binary);
  std::array<unsigned char, 8> sig{};
  probe.read(reinterpret_cast<char*>(sig.data()), sig.size());
  if (probe.gcount() >= 8 && png_sig_cmp(sig.data(), 0, 8) == 0) return read_png(path);
  if (probe.gcount() >= 2 && sig[0] == 'P') return read_pgm(path);
  fail(path, "unrecognised image format (expected PGM or PNG)");
}

void write_pgm(const fs::path& path, const Image& image, int bits) {
  if (bits != 8 && bits != 16) throw std::invalid_argument("write_pgm: bits must be 8 or 16");
  const unsigned maxval = bits == 8 ? 255u : 65535u;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << image.width << " " << image.height << "\n" << maxval << "\n";
  std::vector<unsigned char> raw;
  raw.reserve(image.size() * (bits / 8));
  for (float v : image.values) {
    const unsigned q = quantize(v, maxval);
    if (bits == 16) raw.push_back(static_cast<unsigned char>(q >> 8));
    raw.push_back(static_cast<unsigned char>(q & 0xFF));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) fail(path, "write failed");
}

void write_png(const fs::path& path, const Image& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) buffer[i] = static_cast<png_byte>(quantize(image.values[i], 255));
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    fail(path, std::string("PNG encode: ") + png.message);
  }
}

void write_image(const fs::path& path, const Image& image) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") write_png(path, image);
  else if (ext == ".pgm") write_pgm(path, image, 16);
  else fail(path, "unsupported output extension '" + ext + "' (use .pgm or .png)");
}

DatasetManifest DatasetManifest::read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open manifest");
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  DatasetManifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    auto where = [&] { return "line " + std::to_string(line_no); };
    if (key == "dims") {
      int h = 0, w = 0;
      if (!(fields >> h >> w) || h <= 0 || w <= 0) fail(path, where() + ": expected 'dims <height> <width>'");
      m.dims = std::pair{h, w};
    } else if (key == "pixel_size") {
      std::array<double, 3> s{};
      if (!(fields >> s[0] >> s[1] >> s[2])) fail(path, where() + ": expected 'pixel_size <x> <y> <z>'");
      m.pixel_size = s;
    } else if (key == "sample") {
      std::string image, label;
      if (!(fields >> image)) fail(path, where() + ": expected 'sample <image> [<label>]'");
      Entry e{resolve(image), std::nullopt};
      if (fields >> label) e.label = resolve(label);
      m.entries.push_back(std::move(e));
    } else {
      fail(path, where() + ": unknown directive '" + key + "'");
    }
  }
  return m;
}

void DatasetManifest::write(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) fail(path, "cannot open for writing");
  out << "# fusionnet dataset manifest\n";
  if (dims) out << "dims " << dims->first << " " << dims->second << "\n";
  if (pixel_size) out << "pixel_size " << (*pixel_size)[0] << " " << (*pixel_size)[1] << " " << (*pixel_size)[2] << "\n";
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) { return p.lexically_relative(base.empty() ? fs::path(".") : base).string(); };
  for (const Entry& e : entries) {
    out << "sample " << rel(e.image);
    if (e.label) out << " " << rel(*e.label);
    out << "\n";
  }
}

namespace {

void check_dims(const DatasetManifest& manifest, const Image& img, const fs::path& path) {
  if (manifest.dims && (img.height != manifest.dims->first || img.width != manifest.dims->second)) {
    fail(path, "size " + std::to_string(img.height) + "x" + std::to_string(img.width) + " differs from declared " +
                   std::to_string(manifest.dims->first) + "x" + std::to_string(manifest.dims->second));
  }
}

}  // namespace

std::vector<SamplePair> load_dataset(const DatasetManifest& manifest) {
  if (manifest.entries.empty()) throw std::invalid_argument("manifest lists no samples");
  std::vector<SamplePair> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    if (!e.label) fail(e.image, "manifest entry has no label");
    SamplePair pair{read_image(e.image), read_image(*e.label)};
    check_dims(manifest, pair.image, e.image);
    check_dims(manifest, pair.label, *e.label);
    if (!pair.image.same_size(pair.label)) fail(*e.label, "label size differs from its image");
    for (float& v : pair.label.values) v = v >= 0.5f ? 1.0f : 0.0f;
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<Image> load_images(const DatasetManifest& manifest) {
  if (manifest.entries.empty()) throw std::invalid_argument("manifest lists no samples");
  std::vector<Image> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    out.push_back(read_image(e.image));
    check_dims(manifest, out.back(), e.image);
  }
  return out;
}

}  // namespace fusionnet

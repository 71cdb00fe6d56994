#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "rva/errors.hpp"
#include "rva/ultrasound.hpp"

namespace rva {

namespace {

void write_raw(int rows, int cols, const std::vector<std::uint8_t>& pixels, const std::string& comment,
               const std::string& path) {
  if (rows <= 0 || cols <= 0 || pixels.size() != static_cast<std::size_t>(rows) * cols) {
    throw IoError("pixel buffer does not match " + std::to_string(cols) + "x" + std::to_string(rows) + ": " + path);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  out << "P5\n";
  if (!comment.empty()) {
    out << "# " << comment << "\n";
  }
  out << cols << " " << rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

// Reads the next header token, collecting comment lines along the way.
std::string next_token(std::istream& in, std::vector<std::string>& comments) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
      comments.push_back(line);
      if (!token.empty()) {
        break;
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) {
        break;
      }
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

int parse_int(const std::string& token, const std::string& path) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || value <= 0) {
    throw IoError("malformed PGM header in " + path);
  }
  return value;
}

}  // namespace

void write_pgm(const UltrasoundFrame& frame, const std::string& path) {
  std::ostringstream comment;
  comment << std::setprecision(17) << "mm_per_px=" << frame.mm_per_px << " frame_index=" << frame.frame_index;
  write_raw(frame.rows, frame.cols, frame.pixels, comment.str(), path);
}

void write_pgm(int rows, int cols, const std::vector<std::uint8_t>& pixels, const std::string& path) {
  write_raw(rows, cols, pixels, "", path);
}

UltrasoundFrame read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open for reading: " + path);
  }
  std::vector<std::string> comments;
  if (next_token(in, comments) != "P5") {
    throw IoError("not a binary PGM: " + path);
  }
  UltrasoundFrame frame;
  frame.cols = parse_int(next_token(in, comments), path);
  frame.rows = parse_int(next_token(in, comments), path);
  if (parse_int(next_token(in, comments), path) != 255) {
    throw IoError("only 8-bit PGM is supported: " + path);
  }
  frame.pixels.resize(static_cast<std::size_t>(frame.rows) * frame.cols);
  in.read(reinterpret_cast<char*>(frame.pixels.data()), static_cast<std::streamsize>(frame.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(frame.pixels.size())) {
    throw IoError("truncated PGM: " + path);
  }
  for (const auto& line : comments) {
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) {
        continue;
      }
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (key == "mm_per_px") {
        frame.mm_per_px = std::stod(value);
      } else if (key == "frame_index") {
        frame.frame_index = std::stoll(value);
      }
    }
  }
  return frame;
}

}  // namespace rva

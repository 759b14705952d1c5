#include "convreuse/frame.hpp"

namespace convreuse {

std::string to_string(Dims d) { return std::to_string(d.rows) + "x" + std::to_string(d.cols); }

Frame::Frame(int rows, int cols, std::uint8_t fill) : rows_(rows), cols_(cols) {
  if (rows <= 0 || cols <= 0) {
    throw ShapeError("frame dimensions must be positive, got " + to_string({rows, cols}));
  }
  pixels_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
}

Frame::Frame(int rows, int cols, std::vector<std::uint8_t> pixels) : rows_(rows), cols_(cols), pixels_(std::move(pixels)) {
  if (rows <= 0 || cols <= 0) {
    throw ShapeError("frame dimensions must be positive, got " + to_string({rows, cols}));
  }
  if (pixels_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw ShapeError("frame pixel count " + std::to_string(pixels_.size()) + " does not match " +
                     to_string({rows, cols}));
  }
}

}  // namespace convreuse

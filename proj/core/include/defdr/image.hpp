#pragma once

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

namespace defdr {

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// H x W x 3 image, values in [0,1], row-major (row, column, channel).
// The shared currency of attacks and defenses; construction clamps so the
// range invariant holds everywhere downstream.
class ImageTensor {
public:
    ImageTensor() : height_(0), width_(0) {}

    ImageTensor(int height, int width)
        : height_(height), width_(width),
          data_(static_cast<size_t>(height) * width * kChannels, 0.0) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("ImageTensor: non-positive dimensions");
    }

    ImageTensor(int height, int width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("ImageTensor: non-positive dimensions");
        if (data_.size() != static_cast<size_t>(height) * width * kChannels)
            throw std::invalid_argument("ImageTensor: data length mismatch");
        for (double& v : data_) v = clamp01(v);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    static constexpr int kChannels = 3;

    double at(int r, int c, int ch) const {
        return data_[(static_cast<size_t>(r) * width_ + c) * kChannels + ch];
    }
    void set(int r, int c, int ch, double v) {
        data_[(static_cast<size_t>(r) * width_ + c) * kChannels + ch] = clamp01(v);
    }

    const std::vector<double>& data() const { return data_; }
    size_t size() const { return data_.size(); }

    bool same_shape(const ImageTensor& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

private:
    int height_;
    int width_;
    std::vector<double> data_;
};

}  // namespace defdr

#include "defdr/ppm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace defdr {
namespace {

[[noreturn]] void fail(const std::string& what, size_t offset) {
    throw std::runtime_error("ppm parse error at byte " + std::to_string(offset) +
                             ": " + what);
}

// Header tokens are separated by whitespace; '#' starts a comment that runs
// to end of line.
void skip_space_and_comments(const std::vector<uint8_t>& b, size_t& i) {
    while (i < b.size()) {
        uint8_t c = b[i];
        if (c == '#') {
            while (i < b.size() && b[i] != '\n') ++i;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++i;
        } else {
            break;
        }
    }
}

int parse_uint(const std::vector<uint8_t>& b, size_t& i, const char* field) {
    skip_space_and_comments(b, i);
    if (i >= b.size()) fail(std::string("missing ") + field, i);
    if (b[i] < '0' || b[i] > '9') fail(std::string("non-numeric ") + field, i);
    long v = 0;
    while (i < b.size() && b[i] >= '0' && b[i] <= '9') {
        v = v * 10 + (b[i] - '0');
        if (v > 1 << 24) fail(std::string(field) + " out of range", i);
        ++i;
    }
    return static_cast<int>(v);
}

}  // namespace

ImageTensor load_ppm(const std::vector<uint8_t>& bytes) {
    size_t i = 0;
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        fail("unsupported magic (want P6)", 0);
    i = 2;
    int width = parse_uint(bytes, i, "width");
    int height = parse_uint(bytes, i, "height");
    int maxval = parse_uint(bytes, i, "maxval");
    if (width <= 0 || height <= 0) fail("non-positive dimensions", i);
    if (maxval != 255) fail("unsupported maxval (want 255)", i);
    // Exactly one whitespace byte separates the header from the payload.
    if (i >= bytes.size()) fail("missing header terminator", i);
    uint8_t sep = bytes[i];
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
        fail("missing whitespace after maxval", i);
    ++i;

    size_t need = static_cast<size_t>(width) * height * 3;
    if (bytes.size() - i < need)
        fail("truncated payload (have " + std::to_string(bytes.size() - i) +
                 " of " + std::to_string(need) + " bytes)",
             bytes.size());

    std::vector<double> data(need);
    for (size_t k = 0; k < need; ++k)
        data[k] = static_cast<double>(bytes[i + k]) / 255.0;
    return ImageTensor(height, width, std::move(data));
}

std::vector<uint8_t> save_ppm(const ImageTensor& img) {
    char header[64];
    int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n",
                          img.width(), img.height());
    std::vector<uint8_t> out(header, header + n);
    out.reserve(out.size() + img.size());
    for (double v : img.data()) {
        // round-half-up; v is already clamped to [0,1]
        out.push_back(static_cast<uint8_t>(std::floor(v * 255.0 + 0.5)));
    }
    return out;
}

ImageTensor load_ppm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return load_ppm(bytes);
}

void save_ppm_file(const ImageTensor& img, const std::string& path) {
    std::vector<uint8_t> bytes = save_ppm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace defdr

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "defdr/dataset.hpp"
#include "defdr/image.hpp"
#include "defdr/ppm.hpp"
#include "defdr/prng.hpp"

using namespace defdr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("defdr_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

std::vector<uint8_t> ppm_bytes(const std::string& header,
                               std::initializer_list<int> payload) {
    std::vector<uint8_t> b(header.begin(), header.end());
    for (int v : payload) b.push_back(static_cast<uint8_t>(v));
    return b;
}

}  // namespace

TEST_CASE("splitmix64 matches the published stream for seed 0") {
    Prng rng(0);
    CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
    CHECK(rng.next_u64() == 0x6E789E6AA1B965F4ULL);
    CHECK(rng.next_u64() == 0x06C45D188009454FULL);
}

TEST_CASE("identical seeds give identical streams") {
    Prng a(0xDEADBEEF), b(0xDEADBEEF);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform_int stays inside its bounds") {
    Prng rng(3);
    for (int i = 0; i < 2000; ++i) {
        int v = rng.uniform_int(-3, 7);
        CHECK(v >= -3);
        CHECK(v <= 7);
    }
}

TEST_CASE("ImageTensor clamps at construction and checks its shape") {
    ImageTensor img(1, 2, {1.5, -0.5, 0.25, 0.0, 1.0, 0.75});
    CHECK(img.at(0, 0, 0) == 1.0);
    CHECK(img.at(0, 0, 1) == 0.0);
    CHECK(img.at(0, 0, 2) == 0.25);
    CHECK_THROWS_AS(ImageTensor(2, 2, std::vector<double>(5, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("load_ppm: 1x1 red pixel") {
    ImageTensor img = load_ppm(ppm_bytes("P6\n1 1\n255\n", {255, 0, 0}));
    CHECK(img.height() == 1);
    CHECK(img.width() == 1);
    CHECK(img.at(0, 0, 0) == 1.0);
    CHECK(img.at(0, 0, 1) == 0.0);
    CHECK(img.at(0, 0, 2) == 0.0);
}

TEST_CASE("load_ppm: linear scaling and comment handling") {
    ImageTensor img = load_ppm(
        ppm_bytes("P6\n# a comment\n2 1\n255\n", {0, 0, 0, 128, 128, 128}));
    CHECK(img.width() == 2);
    CHECK(img.at(0, 0, 0) == 0.0);
    CHECK(img.at(0, 1, 0) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("load_ppm rejects bad input with byte offsets") {
    CHECK_THROWS_WITH_AS(load_ppm(ppm_bytes("P5\n1 1\n255\n", {1, 2, 3})),
                         doctest::Contains("unsupported magic"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(load_ppm(ppm_bytes("P6\n1 1\n254\n", {1, 2, 3})),
                         doctest::Contains("maxval"), std::runtime_error);
    CHECK_THROWS_WITH_AS(load_ppm(ppm_bytes("P6\n2 2\n255\n", {1, 2, 3})),
                         doctest::Contains("truncated"), std::runtime_error);
    // errors must name a byte offset
    try {
        load_ppm(ppm_bytes("P6\n2 2\n255\n", {1, 2, 3}));
        FAIL("expected throw");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("save_ppm writes canonical bytes") {
    ImageTensor img(1, 1, {1.0, 0.0, 0.0});
    std::vector<uint8_t> bytes = save_ppm(img);
    REQUIRE(bytes.size() >= 3);
    CHECK(bytes[bytes.size() - 3] == 0xFF);
    CHECK(bytes[bytes.size() - 2] == 0x00);
    CHECK(bytes[bytes.size() - 1] == 0x00);
}

TEST_CASE("all 256 byte values survive a round trip") {
    // oracle: every byte b maps to b/255 and back to b
    std::vector<double> px;
    px.reserve(256 * 3);
    for (int b = 0; b < 256; ++b)
        for (int c = 0; c < 3; ++c) px.push_back(b / 255.0);
    ImageTensor img(16, 16, px);
    ImageTensor back = load_ppm(save_ppm(img));
    for (int b = 0; b < 256; ++b) {
        int r = b / 16, c = b % 16;
        CHECK(back.at(r, c, 0) == doctest::Approx(b / 255.0).epsilon(1e-15));
    }
}

TEST_CASE("0.5 rounds half-up to byte 128") {
    ImageTensor img(1, 1, {0.5, 0.5, 0.5});
    std::vector<uint8_t> bytes = save_ppm(img);
    CHECK(bytes[bytes.size() - 1] == 128);
}

TEST_CASE("save-load-save is the identity on canonical bytes") {
    Prng rng(11);
    std::vector<double> px(12 * 9 * 3);
    for (double& v : px) v = rng.next_double();
    ImageTensor img(12, 9, px);
    std::vector<uint8_t> once = save_ppm(img);
    std::vector<uint8_t> twice = save_ppm(load_ppm(once));
    CHECK(once == twice);
}

TEST_CASE("shapes dataset: balance, determinism, seed sensitivity") {
    LabeledDataset ds = gen_shapes_dataset(7, 100, 32);
    REQUIRE(ds.size() == 100);
    CHECK(ds.class_count == 5);
    int counts[5] = {0, 0, 0, 0, 0};
    for (size_t i = 0; i < ds.size(); ++i) ++counts[ds.label(i)];
    for (int c = 0; c < 5; ++c) CHECK(counts[c] == 20);

    LabeledDataset again = gen_shapes_dataset(7, 100, 32);
    bool identical = true;
    for (size_t i = 0; i < ds.size() && identical; ++i)
        identical = ds.image(i).data() == again.image(i).data() &&
                    ds.label(i) == again.label(i);
    CHECK(identical);

    // oracle: direct comparison of the generated tensors
    LabeledDataset other = gen_shapes_dataset(8, 100, 32);
    bool differs = false;
    for (size_t i = 0; i < ds.size() && !differs; ++i)
        differs = ds.image(i).data() != other.image(i).data();
    CHECK(differs);
}

TEST_CASE("shapes dataset: label histogram within 1 of uniform for ragged n") {
    LabeledDataset ds = gen_shapes_dataset(3, 103, 16);
    int counts[5] = {0, 0, 0, 0, 0};
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds.label(i) >= 0);
        CHECK(ds.label(i) < 5);
        ++counts[ds.label(i)];
    }
    int lo = *std::min_element(counts, counts + 5);
    int hi = *std::max_element(counts, counts + 5);
    CHECK(hi - lo <= 1);
}

TEST_CASE("shapes dataset rejects tiny sides and counts") {
    CHECK_THROWS_AS(gen_shapes_dataset(1, 100, 15), std::invalid_argument);
    CHECK_THROWS_AS(gen_shapes_dataset(1, 3, 32), std::invalid_argument);
}

TEST_CASE("manifest loading happy path and row-numbered errors") {
    TempDir dir;
    LabeledDataset src = gen_shapes_dataset(5, 5, 16);
    save_ppm_file(src.image(0), (dir.path / "a.ppm").string());
    save_ppm_file(src.image(1), (dir.path / "b.ppm").string());

    SUBCASE("two-row manifest loads in file order") {
        LabeledDataset ds = load_manifest("path,label\na.ppm,0\nb.ppm,3\n",
                                          dir.path.string());
        REQUIRE(ds.size() == 2);
        CHECK(ds.label(0) == 0);
        CHECK(ds.label(1) == 3);
        CHECK(ds.class_count == 4);  // max(label)+1
        CHECK(ds.image(0).data() == load_ppm(save_ppm(src.image(0))).data());
    }

    SUBCASE("non-integer label names its row") {
        CHECK_THROWS_WITH_AS(
            load_manifest("path,label\na.ppm,0\nb.ppm,1\nb.ppm,cat\n",
                          dir.path.string()),
            doctest::Contains("row 3: non-integer label"), std::runtime_error);
    }

    SUBCASE("dimension mismatch names its row") {
        LabeledDataset big = gen_shapes_dataset(5, 5, 32);
        save_ppm_file(big.image(0), (dir.path / "big.ppm").string());
        CHECK_THROWS_WITH_AS(
            load_manifest("path,label\na.ppm,0\nbig.ppm,1\n", dir.path.string()),
            doctest::Contains("row 2: dimension mismatch"), std::runtime_error);
    }

    SUBCASE("missing file names its row") {
        CHECK_THROWS_WITH_AS(
            load_manifest("path,label\na.ppm,0\nnope.ppm,1\n", dir.path.string()),
            doctest::Contains("row 2"), std::runtime_error);
    }

    SUBCASE("bad header rejected") {
        CHECK_THROWS_AS(load_manifest("file,cls\na.ppm,0\n", dir.path.string()),
                        std::runtime_error);
    }
}

TEST_CASE("save_dataset writes a loadable manifest") {
    TempDir dir;
    LabeledDataset src = gen_shapes_dataset(9, 10, 16);
    save_dataset(src, dir.path.string());
    std::ifstream in(dir.path / "manifest.csv");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    LabeledDataset back = load_manifest(text, dir.path.string());
    REQUIRE(back.size() == src.size());
    for (size_t i = 0; i < src.size(); ++i) {
        CHECK(back.label(i) == src.label(i));
        // quantization is the only loss
        CHECK(back.image(i).data() == load_ppm(save_ppm(src.image(i))).data());
    }
}

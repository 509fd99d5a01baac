#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "holovol/optics.hpp"

using namespace holovol;

namespace {

OpticalConfig test_config() {
    OpticalConfig c;
    c.wavelength_um = 0.850;
    c.sensor_pitch_um = 1.12;
    return c;
}

// At 1.12 um pitch the whole DFT band is propagating (Nyquist 0.446 < 1/λ
// = 1.176 cycles/um), so any random field is evanescent-free.
ComplexField random_field(int n, double pitch, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    ComplexField f;
    f.grid = ComplexGrid(n, n);
    for (size_t i = 0; i < f.grid.size(); ++i)
        f.grid[i] = std::complex<double>(dist(rng), dist(rng));
    f.pitch_um = pitch;
    return f;
}

double rel_rms_diff(const ComplexGrid& a, const ComplexGrid& b) {
    REQUIRE(a.size() == b.size());
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return std::sqrt(num / den);
}

} // namespace

TEST_CASE("fft roundtrip restores the input") {
    auto f = random_field(32, 1.0, 1);
    auto back = ifft2(fft2(f.grid));
    CHECK(rel_rms_diff(back, f.grid) < 1e-13);
}

TEST_CASE("fft of a constant concentrates in the DC bin") {
    ComplexGrid g(8, 8, {2.0, 0.0});
    auto spec = fft2(g);
    CHECK(std::abs(spec(0, 0) - std::complex<double>(128.0, 0.0)) < 1e-12);
    CHECK(std::abs(spec(3, 5)) < 1e-12);
}

TEST_CASE("good_fft_size returns smooth sizes") {
    CHECK(good_fft_size(1) == 1);
    CHECK(good_fft_size(512) == 512);
    CHECK(good_fft_size(513) == 525);   // 3 * 5^2 * 7
    CHECK(good_fft_size(1025) == 1029); // 3 * 7^3
}

TEST_CASE("zero distance propagation is the identity") {
    auto f = random_field(64, 1.12, 2);
    auto out = propagate_angular_spectrum(f, 0.0, test_config());
    CHECK(rel_rms_diff(out.grid, f.grid) < 1e-12);
    CHECK(out.z_um == f.z_um);
}

TEST_CASE("propagation preserves energy on the propagating band") {
    auto cfg = test_config();
    for (unsigned seed = 0; seed < 5; ++seed) {
        auto f = random_field(64, 1.12, 100 + seed);
        auto out = propagate_angular_spectrum(f, 750.0, cfg);
        CHECK(std::abs(field_energy(out) - field_energy(f)) /
                  field_energy(f) <
              1e-9);
    }
}

TEST_CASE("opposite distances invert each other") {
    auto cfg = test_config();
    auto f = random_field(64, 1.12, 7);
    auto there = propagate_angular_spectrum(f, 613.0, cfg);
    auto back = propagate_angular_spectrum(there, -613.0, cfg);
    CHECK(rel_rms_diff(back.grid, f.grid) < 1e-9);
    CHECK(back.z_um == Catch::Approx(f.z_um).margin(1e-12));
}

TEST_CASE("two hops equal one combined hop") {
    auto cfg = test_config();
    auto f = random_field(48, 1.12, 9);
    auto two = propagate_angular_spectrum(
        propagate_angular_spectrum(f, 200.0, cfg), 550.0, cfg);
    auto one = propagate_angular_spectrum(f, 750.0, cfg);
    CHECK(rel_rms_diff(two.grid, one.grid) < 1e-9);
}

TEST_CASE("on axis plane wave picks up the free space phase") {
    auto cfg = test_config();
    const double z = 321.0;
    ComplexField f;
    f.grid = ComplexGrid(32, 32, {1.0, 0.0});
    f.pitch_um = 1.12;
    auto out = propagate_angular_spectrum(f, z, cfg);
    const double phase = 2.0 * std::numbers::pi * z / cfg.wavelength_um;
    const std::complex<double> expect(std::cos(phase), std::sin(phase));
    for (size_t i = 0; i < out.grid.size(); ++i)
        REQUIRE(std::abs(out.grid[i] - expect) < 1e-9);
}

TEST_CASE("tilted plane wave follows the dispersion relation") {
    auto cfg = test_config();
    const int n = 64;
    const double pitch = 1.12;
    const double z = 500.0;
    const int kx = 5, ky = -3;
    ComplexField f;
    f.grid = ComplexGrid(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double ph = 2.0 * std::numbers::pi *
                              (kx * c + ky * r) / static_cast<double>(n);
            f.grid(r, c) = {std::cos(ph), std::sin(ph)};
        }
    f.pitch_um = pitch;

    const double fx = kx / (n * pitch);
    const double fy = ky / (n * pitch);
    const double kz = std::sqrt(1.0 / (cfg.wavelength_um * cfg.wavelength_um) -
                                fx * fx - fy * fy);
    const double ph_z = 2.0 * std::numbers::pi * z * kz;
    const std::complex<double> factor(std::cos(ph_z), std::sin(ph_z));

    auto out = propagate_angular_spectrum(f, z, cfg);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            REQUIRE(std::abs(out.grid(r, c) - factor * f.grid(r, c)) < 1e-9);
}

TEST_CASE("evanescent components are removed") {
    // Sampled at 0.25 um the corner frequencies exceed 1/λ and must decay
    // to nothing rather than oscillate forever.
    auto cfg = test_config();
    const int n = 32;
    ComplexField f;
    f.grid = ComplexGrid(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double ph = std::numbers::pi * (r + c);  // Nyquist in both
            f.grid(r, c) = {std::cos(ph), std::sin(ph)};
        }
    f.pitch_um = 0.25;
    auto out = propagate_angular_spectrum(f, 10.0, cfg);
    for (size_t i = 0; i < out.grid.size(); ++i)
        REQUIRE(std::abs(out.grid[i]) < 1e-12);
}

TEST_CASE("padded propagation matches a manual embedding") {
    auto cfg = test_config();
    auto small = random_field(128, 1.12, 21);

    std::complex<double> mean(0, 0);
    for (size_t i = 0; i < small.grid.size(); ++i)
        mean += small.grid[i];
    mean /= static_cast<double>(small.grid.size());

    ComplexField big;
    big.grid = ComplexGrid(512, 512, mean);
    big.pitch_um = 1.12;
    for (int r = 0; r < 128; ++r)
        for (int c = 0; c < 128; ++c)
            big.grid(192 + r, 192 + c) = small.grid(r, c);

    auto ref = propagate_angular_spectrum(big, 750.0, cfg);
    auto ref_crop = grid_crop(ref.grid, 192, 192, 128, 128);
    auto padded = propagate_angular_spectrum(small, 750.0, cfg, 4.0);
    CHECK(rel_rms_diff(padded.grid, ref_crop) < 1e-12);
}

TEST_CASE("upsampling by one is the identity") {
    auto f = random_field(16, 1.12, 3);
    auto out = upsample_pad(f, 1);
    CHECK(rel_rms_diff(out.grid, f.grid) == 0.0);
}

TEST_CASE("upsampling keeps original samples and energy") {
    auto f = random_field(32, 1.12, 4);
    auto out = upsample_pad(f, 2);
    REQUIRE(out.grid.rows() == 64);
    CHECK(out.pitch_um == Catch::Approx(0.56));
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c)
            REQUIRE(std::abs(out.grid(2 * r, 2 * c) - f.grid(r, c)) < 1e-12);
    CHECK(std::abs(field_energy(out) - field_energy(f)) / field_energy(f) <
          1e-9);
}

TEST_CASE("upsampling interpolates band limited waves exactly") {
    const int n = 32;
    const int kx = 3, ky = 5;
    ComplexField f;
    f.grid = ComplexGrid(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double ph = 2.0 * std::numbers::pi *
                              (kx * c + ky * r) / static_cast<double>(n);
            f.grid(r, c) = {std::cos(ph), std::sin(ph)};
        }
    f.pitch_um = 1.0;
    auto out = upsample_pad(f, 2);
    for (int r = 0; r < 2 * n; ++r)
        for (int c = 0; c < 2 * n; ++c) {
            const double ph = 2.0 * std::numbers::pi *
                              (kx * c + ky * r) / static_cast<double>(2 * n);
            const std::complex<double> expect(std::cos(ph), std::sin(ph));
            REQUIRE(std::abs(out.grid(r, c) - expect) < 1e-9);
        }
}

TEST_CASE("upsampling a constant stays constant") {
    ComplexField f;
    f.grid = ComplexGrid(8, 8, {3.0, -1.0});
    f.pitch_um = 2.0;
    auto out = upsample_pad(f, 4);
    for (size_t i = 0; i < out.grid.size(); ++i)
        REQUIRE(std::abs(out.grid[i] - std::complex<double>(3.0, -1.0)) <
                1e-12);
}

TEST_CASE("field energy scales with the cell area") {
    ComplexField f;
    f.grid = ComplexGrid(10, 10, {1.0, 0.0});
    f.pitch_um = 2.0;
    CHECK(field_energy(f) == Catch::Approx(400.0));
}

TEST_CASE("field validation rejects garbage") {
    auto cfg = test_config();
    ComplexField f;
    f.grid = ComplexGrid(8, 8, {1.0, 0.0});
    f.pitch_um = 1.12;

    SECTION("non-finite samples") {
        f.grid(3, 3) = {std::numeric_limits<double>::quiet_NaN(), 0.0};
        CHECK_THROWS_AS(propagate_angular_spectrum(f, 100.0, cfg), Error);
    }
    SECTION("bad pitch") {
        f.pitch_um = 0.0;
        CHECK_THROWS_AS(field_energy(f), Error);
    }
    SECTION("bad pad factor") {
        CHECK_THROWS_AS(propagate_angular_spectrum(f, 100.0, cfg, 0.5), Error);
    }
    SECTION("bad upsample factor") {
        CHECK_THROWS_AS(upsample_pad(f, 0), Error);
    }
    SECTION("error carries the invalid_input code") {
        try {
            upsample_pad(f, -2);
            FAIL("expected a throw");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::invalid_input);
        }
    }
}

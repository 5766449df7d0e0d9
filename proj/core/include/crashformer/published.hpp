#pragma once

#include <array>
#include <cstddef>
#include <string_view>

// Published results for the ten-city evaluation, kept as static fixtures for
// checking report arithmetic. They are never compared with trained models.
namespace crashformer::eval::published {

struct CityRow {
  std::string_view city;
  std::array<double, 4> f1_1;
  std::array<double, 4> f1_0;
};

/// History length sweep, columns K = 4, 8, 12, 16.
inline constexpr std::array<int, 4> kSweepLengths{4, 8, 12, 16};
inline constexpr std::array<CityRow, 10> kSweep{{
    {"Houston", {0.6539, 0.6391, 0.6286, 0.5961}, {0.9808, 0.9793, 0.9787, 0.9757}},
    {"Seattle", {0.5058, 0.5093, 0.4996, 0.4942}, {0.9717, 0.9721, 0.9712, 0.9706}},
    {"Miami", {0.5822, 0.5609, 0.5377, 0.5217}, {0.9770, 0.9750, 0.9727, 0.9711}},
    {"Los Angeles", {0.6698, 0.6462, 0.6297, 0.6136}, {0.9515, 0.9469, 0.9435, 0.9401}},
    {"Charlotte", {0.6167, 0.6015, 0.5935, 0.5818}, {0.9798, 0.9780, 0.9781, 0.9772}},
    {"Dallas", {0.6156, 0.6034, 0.5929, 0.5845}, {0.9792, 0.9782, 0.9773, 0.9767}},
    {"Austin", {0.5547, 0.5444, 0.5331, 0.5213}, {0.9829, 0.9823, 0.9816, 0.9808}},
    {"Atlanta", {0.5509, 0.5526, 0.5496, 0.5427}, {0.9820, 0.9821, 0.9819, 0.9814}},
    {"Phoenix", {0.4993, 0.5001, 0.4943, 0.4857}, {0.9814, 0.9815, 0.9811, 0.9805}},
    {"San Diego", {0.5507, 0.5496, 0.5485, 0.5451}, {0.9802, 0.9801, 0.9801, 0.9798}},
}};
inline constexpr std::array<double, 4> kSweepAverageF1_1{0.57996, 0.57071, 0.56075, 0.54867};
inline constexpr std::array<double, 4> kSweepAverageF1_0{0.97665, 0.97555, 0.97462, 0.97339};
/// Stated gains of K = 4 over K = 8, 12, 16, in percent.
inline constexpr std::array<double, 3> kSweepStatedGains{1.62, 3.42, 5.70};

/// Modality ablation, columns: full, without image, without demographics,
/// without both.
inline constexpr std::array<std::string_view, 4> kAblationArms{"full", "wo_img", "wo_demo", "wo_img_demo"};
inline constexpr std::array<CityRow, 10> kAblation{{
    {"Houston", {0.6539, 0.6446, 0.6498, 0.6398}, {0.9808, 0.9812, 0.9817, 0.9813}},
    {"Seattle", {0.5058, 0.4886, 0.4941, 0.4831}, {0.9717, 0.9706, 0.9706, 0.9695}},
    {"Miami", {0.5822, 0.5627, 0.5797, 0.5604}, {0.9770, 0.9780, 0.9789, 0.9780}},
    {"Los Angeles", {0.6698, 0.6546, 0.6614, 0.6683}, {0.9515, 0.9646, 0.9654, 0.9653}},
    {"Charlotte", {0.6167, 0.6091, 0.6173, 0.6072}, {0.9798, 0.9746, 0.9750, 0.9742}},
    {"Dallas", {0.6156, 0.6141, 0.5938, 0.5912}, {0.9792, 0.9713, 0.9689, 0.9684}},
    {"Austin", {0.5547, 0.5370, 0.5424, 0.5523}, {0.9829, 0.9749, 0.9756, 0.9764}},
    {"Atlanta", {0.5509, 0.5550, 0.5572, 0.5594}, {0.9820, 0.9653, 0.9814, 0.9822}},
    {"Phoenix", {0.4993, 0.4988, 0.4998, 0.4938}, {0.9814, 0.9808, 0.9808, 0.9804}},
    {"San Diego", {0.5507, 0.5195, 0.5370, 0.5259}, {0.9802, 0.9804, 0.9813, 0.9806}},
}};
inline constexpr std::array<double, 4> kAblationAverageF1_1{0.57996, 0.56858, 0.57325, 0.56819};
inline constexpr std::array<double, 4> kAblationAverageF1_0{0.97665, 0.97417, 0.97596, 0.97573};

/// Spatial-sparsity comparison in Houston: CrashFormer F1_1, the stated gain
/// over the best baseline, and that baseline's score implied by the gain
/// (0.6539 / 1.02737, rounded to five places).
inline constexpr double kSpatialHoustonF1_1 = 0.6539;
inline constexpr double kSpatialStatedGain = 2.737;
inline constexpr double kSpatialBestBaselineF1_1 = 0.63648;

/// Corpus statistics.
inline constexpr std::size_t kSamples = 17'517'440;
inline constexpr std::size_t kPositives = 644'322;
inline constexpr double kPositivePercent = 3.67;
inline constexpr std::size_t kWindowsPerRegion = 8080;
inline constexpr std::size_t kHoustonRegions = 386;

}  // namespace crashformer::eval::published

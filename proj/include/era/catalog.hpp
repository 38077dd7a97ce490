#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace era {

// Canonical color map: palette name -> RGB in [0,1].
// The 19 names from the manipulation prompt's color space, plus "orange",
// which appears in scene descriptions but not in the prompt palette.
struct ColorDef {
    std::string_view name;
    std::array<double, 3> rgb;
};

inline constexpr int kNumColors = 20;

const std::vector<ColorDef>& color_palette();

// Nearest palette name by Euclidean distance in normalized RGB.
// Ties break toward the earlier palette entry.
int classify_color(const std::array<double, 3>& rgb);
std::string_view color_name(int color_index);
int color_index(std::string_view name);  // -1 if unknown

// Tabletop shape labels. Container and ShapeSorter hold other objects.
enum class Shape : uint8_t {
    Cube,
    Star,
    Moon,
    Cylinder,
    Triangular,
    Container,
    Sponge,
    ShapeSorter,
};
inline constexpr int kNumShapes = 8;

std::string_view shape_name(Shape s);
int shape_index_of(std::string_view name);  // -1 if unknown
bool shape_is_container(Shape s);

// Household catalog entry. Flags drive skill-table construction and
// per-skill validity rules.
struct HouseEntry {
    std::string_view name;
    bool pickupable = false;
    bool receptacle = false;
    bool openable = false;
    bool toggleable = false;
    bool sliceable = false;
};

const std::vector<HouseEntry>& house_catalog();
const HouseEntry* house_entry(std::string_view name);  // nullptr if unknown

}  // namespace era

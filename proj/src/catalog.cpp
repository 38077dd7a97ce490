#include "era/catalog.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace era {

const std::vector<ColorDef>& color_palette() {
    static const std::vector<ColorDef> palette = {
        {"red", {1.0, 0.0, 0.0}},
        {"maroon", {0.5, 0.0, 0.0}},
        {"lime", {0.0, 1.0, 0.0}},
        {"green", {0.0, 0.5, 0.0}},
        {"blue", {0.0, 0.0, 1.0}},
        {"navy", {0.0, 0.0, 0.5}},
        {"yellow", {1.0, 1.0, 0.0}},
        {"cyan", {0.0, 1.0, 1.0}},
        {"magenta", {1.0, 0.0, 1.0}},
        {"silver", {0.75, 0.75, 0.75}},
        {"gray", {0.5, 0.5, 0.5}},
        {"olive", {0.5, 0.5, 0.0}},
        {"purple", {0.5, 0.0, 0.5}},
        {"teal", {0.0, 0.5, 0.5}},
        {"azure", {0.0, 0.5, 1.0}},
        {"violet", {0.93, 0.51, 0.93}},
        {"rose", {1.0, 0.0, 0.5}},
        {"black", {0.0, 0.0, 0.0}},
        {"white", {1.0, 1.0, 1.0}},
        {"orange", {1.0, 0.65, 0.0}},
    };
    return palette;
}

int classify_color(const std::array<double, 3>& rgb) {
    const auto& palette = color_palette();
    int best = 0;
    double best_d2 = 1e300;
    for (int i = 0; i < static_cast<int>(palette.size()); ++i) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double d = rgb[c] - palette[i].rgb[c];
            d2 += d * d;
        }
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

std::string_view color_name(int color_index) {
    return color_palette().at(static_cast<size_t>(color_index)).name;
}

int color_index(std::string_view name) {
    const auto& palette = color_palette();
    for (int i = 0; i < static_cast<int>(palette.size()); ++i) {
        if (palette[i].name == name) return i;
    }
    return -1;
}

namespace {
constexpr std::array<std::string_view, kNumShapes> kShapeNames = {
    "cube", "star", "moon", "cylinder", "triangular", "container", "sponge", "shape sorter",
};
}  // namespace

std::string_view shape_name(Shape s) {
    return kShapeNames[static_cast<size_t>(s)];
}

int shape_index_of(std::string_view name) {
    for (int i = 0; i < kNumShapes; ++i) {
        if (kShapeNames[static_cast<size_t>(i)] == name) return i;
    }
    return -1;
}

bool shape_is_container(Shape s) {
    return s == Shape::Container || s == Shape::ShapeSorter;
}

const std::vector<HouseEntry>& house_catalog() {
    // name, pickupable, receptacle, openable, toggleable, sliceable
    static const std::vector<HouseEntry> catalog = {
        {"Apple", true, false, false, false, true},
        {"Bread", true, false, false, false, true},
        {"Tomato", true, false, false, false, true},
        {"Potato", true, false, false, false, true},
        {"Lettuce", true, false, false, false, true},
        {"Egg", true, false, false, false, false},
        {"Plate", true, false, false, false, false},
        {"Spoon", true, false, false, false, false},
        {"Fork", true, false, false, false, false},
        {"Knife", true, false, false, false, false},
        {"Cup", true, false, false, false, false},
        {"Mug", true, false, false, false, false},
        {"Pot", true, false, false, false, false},
        {"Pan", true, false, false, false, false},
        {"Bowl", true, false, false, false, false},
        {"SoapBar", true, false, false, false, false},
        {"SprayBottle", true, false, false, false, false},
        {"RemoteControl", true, false, false, false, false},
        {"Book", true, false, false, false, false},
        {"KeyChain", true, false, false, false, false},
        {"Pencil", true, false, false, false, false},
        {"Pen", true, false, false, false, false},
        {"Watch", true, false, false, false, false},
        {"CellPhone", true, false, false, false, false},
        {"CreditCard", true, false, false, false, false},
        {"Pillow", true, false, false, false, false},
        {"Towel", true, false, false, false, false},
        {"HandTowel", true, false, false, false, false},
        {"TissueBox", true, false, false, false, false},
        {"Candle", true, false, false, false, false},
        {"Statue", true, false, false, false, false},
        {"Vase", true, false, false, false, false},
        {"WineBottle", true, false, false, false, false},
        {"Newspaper", true, false, false, false, false},
        {"DishSponge", true, false, false, false, false},
        {"PepperShaker", true, false, false, false, false},
        {"SaltShaker", true, false, false, false, false},
        {"ButterKnife", true, false, false, false, false},
        {"Ladle", true, false, false, false, false},
        {"Bottle", true, false, false, false, false},
        // Duplicate instances, distinguished by an index following the name.
        {"Apple_2", true, false, false, false, true},
        {"Egg_2", true, false, false, false, false},
        {"Book_2", true, false, false, false, false},
        {"Candle_2", true, false, false, false, false},
        {"SoapBar_2", true, false, false, false, false},
        {"Cup_2", true, false, false, false, false},
        {"Tomato_2", true, false, false, false, true},
        {"Pencil_2", true, false, false, false, false},
        // Receptacles.
        {"CounterTop", false, true, false, false, false},
        {"DiningTable", false, true, false, false, false},
        {"SideTable", false, true, false, false, false},
        {"Shelf", false, true, false, false, false},
        {"Fridge", false, true, true, false, false},
        {"Microwave", false, true, true, true, false},
        {"Cabinet", false, true, true, false, false},
        {"Drawer", false, true, true, false, false},
        {"Safe", false, true, true, false, false},
        {"GarbageCan", false, true, false, false, false},
        {"SinkBasin", false, true, false, false, false},
        {"BathtubBasin", false, true, false, false, false},
        {"CoffeeTable", false, true, false, false, false},
        {"Desk", false, true, false, false, false},
        {"Sofa", false, true, false, false, false},
        {"Bed", false, true, false, false, false},
        {"Floor", false, true, false, false, false},
        // Standalone toggleables.
        {"Faucet", false, false, false, true, false},
        {"FloorLamp", false, false, false, true, false},
        {"DeskLamp", false, false, false, true, false},
        {"Toaster", false, false, false, true, false},
        {"CoffeeMachine", false, false, false, true, false},
    };
    return catalog;
}

const HouseEntry* house_entry(std::string_view name) {
    static const std::unordered_map<std::string_view, const HouseEntry*> index = [] {
        std::unordered_map<std::string_view, const HouseEntry*> m;
        for (const auto& e : house_catalog()) m.emplace(e.name, &e);
        return m;
    }();
    auto it = index.find(name);
    return it == index.end() ? nullptr : it->second;
}

}  // namespace era

#pragma once

#include <string>
#include <vector>

namespace visage {

// One comparison row; paths are used verbatim as image sources, so pass
// paths relative to the HTML file's directory.  Empty cells are allowed.
struct GalleryRow {
    std::string id;
    std::string input;
    std::string no_reference;
    std::string with_reference;
    std::string ground_truth;
};

// Static HTML grid with the four comparison columns.
void write_gallery(const std::string& html_path, const std::string& title,
                   const std::vector<GalleryRow>& rows);

}  // namespace visage

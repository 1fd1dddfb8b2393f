#include "visage/gallery.hpp"

#include <fstream>

#include "visage/errors.hpp"

namespace visage {

namespace {

std::string escape_html(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void cell(std::ofstream& out, const std::string& path) {
    if (path.empty()) {
        out << "      <td class=\"empty\">&mdash;</td>\n";
    } else {
        out << "      <td><img src=\"" << escape_html(path) << "\" alt=\"\"></td>\n";
    }
}

}  // namespace

void write_gallery(const std::string& html_path, const std::string& title,
                   const std::vector<GalleryRow>& rows) {
    std::ofstream out(html_path, std::ios::trunc);
    if (!out) throw IoError("gallery: cannot open " + html_path);
    out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>"
        << escape_html(title) << "</title>\n<style>\n"
        << "body { font-family: sans-serif; background: #181818; color: #ddd; }\n"
        << "table { border-collapse: collapse; margin: 1em auto; }\n"
        << "th, td { padding: 6px 10px; text-align: center; }\n"
        << "img { image-rendering: pixelated; width: 192px; height: auto; }\n"
        << "td.empty { color: #666; }\n"
        << "tr:nth-child(even) { background: #222; }\n"
        << "</style>\n</head>\n<body>\n<h1>" << escape_html(title) << "</h1>\n<table>\n"
        << "  <tr><th>id</th><th>input</th><th>no reference</th><th>with reference</th>"
        << "<th>ground truth</th></tr>\n";
    for (const GalleryRow& row : rows) {
        out << "  <tr>\n      <td>" << escape_html(row.id) << "</td>\n";
        cell(out, row.input);
        cell(out, row.no_reference);
        cell(out, row.with_reference);
        cell(out, row.ground_truth);
        out << "  </tr>\n";
    }
    out << "</table>\n</body>\n</html>\n";
}

}  // namespace visage

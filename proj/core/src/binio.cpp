#include "binio.hpp"

#include <fstream>

namespace lbridge::binio {

std::string read_file(const std::string& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(what + ": cannot open '" + path + "' for reading");
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw DataError(what + ": read failure on '" + path + "'");
    }
    return data;
}

void write_file(const std::string& path, const std::string& payload, const std::string& what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError(what + ": cannot open '" + path + "' for writing");
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) {
        throw DataError(what + ": write failure on '" + path + "'");
    }
}

}  // namespace lbridge::binio

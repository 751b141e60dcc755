#include "qfmts/prompt.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

#include "qfmts/error.hpp"

namespace qfmts {

namespace embedded {
std::string_view lookup(std::string_view name);
}

std::string prompt_sha256(std::string_view text) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (true) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw Error("unterminated placeholder in template");
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    const auto it = values.find(key);
    if (it == values.end()) throw Error("template placeholder {{" + key + "}} has no value");
    out += it->second;
    pos = close + 2;
  }
  return out;
}

std::string_view builtin_resource(std::string_view relative_path) {
  try {
    return embedded::lookup(relative_path);
  } catch (const std::out_of_range& e) {
    throw Error(e.what());
  }
}

std::string_view builtin_template(std::string_view name) {
  auto text = builtin_resource("data/templates/" + std::string(name) + ".txt");
  if (text.ends_with('\n')) text.remove_suffix(1);
  return text;
}

}  // namespace qfmts

// Copyright 2026 The GTNB Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gtnb/genre.hpp"

#include <string>

#include "gtnb/error.hpp"

namespace gtnb {

std::string_view GenreLabel::code() const {
  return kGenreCodes[static_cast<std::size_t>(from_id(id).id)];
}

GenreLabel GenreLabel::from_id(int id) {
  if (id < 0 || id >= static_cast<int>(kGenreCount)) {
    throw Error("genre id out of range: " + std::to_string(id));
  }
  return GenreLabel{id};
}

GenreLabel GenreLabel::from_code(std::string_view code) {
  for (std::size_t i = 0; i < kGenreCount; ++i) {
    if (code == kGenreCodes[i] || code == kGenreCodes[i].substr(1)) {
      return GenreLabel{static_cast<int>(i)};
    }
  }
  throw Error("unknown genre code: " + std::string(code));
}

}  // namespace gtnb

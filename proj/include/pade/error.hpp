// Copyright 2026 The PADE-ReID Authors. All Rights Reserved.
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

#pragma once

#include <stdexcept>
#include <string>

namespace pade {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, or an input that does not match the configured shape.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Image could not be decoded into a 3-channel raster.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// Dataset or batch violates a structural precondition.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss; message carries the per-term dump.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pade

// Copyright 2026 The UBW Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UBW_STUDENT_T_H_
#define UBW_STUDENT_T_H_

namespace ubw {

// I_x(a, b) by Lentz's continued fraction, using the symmetry
// I_x(a, b) = 1 - I_{1-x}(b, a) where it converges faster.
double RegularizedIncompleteBeta(double a, double b, double x);

// P(T <= t) for Student's t with `dof` > 0 degrees of freedom.
double StudentTCdf(double t, double dof);

}  // namespace ubw

#endif  // UBW_STUDENT_T_H_

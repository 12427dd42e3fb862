/** Yaw/pitch camera rotation as the wxyz unit quaternion the service expects.
 *
 * The rotation is R_y(yaw) then R_x(pitch) applied right to left, i.e. the
 * camera pitches about its own x axis first and the result is yawed about
 * the world y (down) axis.  Hamilton product of
 * (cos y/2, 0, sin y/2, 0) and (cos p/2, sin p/2, 0, 0).
 */
export function quatFromYawPitch(
  yaw: number,
  pitch: number,
): [number, number, number, number] {
  const cy = Math.cos(yaw / 2);
  const sy = Math.sin(yaw / 2);
  const cp = Math.cos(pitch / 2);
  const sp = Math.sin(pitch / 2);
  // || 0 turns -0 into 0 so identity poses serialize as exact zeros
  return [cy * cp, cy * sp, sy * cp, -(sy * sp) || 0];
}

/** Rotate a vector by a wxyz unit quaternion (for tests and HUD arrows). */
export function rotate(
  q: [number, number, number, number],
  v: [number, number, number],
): [number, number, number] {
  const [w, x, y, z] = q;
  // v + 2 w (u x v) + 2 (u x (u x v)) with u = (x, y, z)
  const ux = y * v[2] - z * v[1];
  const uy = z * v[0] - x * v[2];
  const uz = x * v[1] - y * v[0];
  const vx = y * uz - z * uy;
  const vy = z * ux - x * uz;
  const vz = x * uy - y * ux;
  return [
    v[0] + 2 * (w * ux + vx),
    v[1] + 2 * (w * uy + vy),
    v[2] + 2 * (w * uz + vz),
  ];
}

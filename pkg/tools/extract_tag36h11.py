"""Regenerate src/ipt/data/tag36h11.txt from OpenCV's bundled AprilTag dictionary.

OpenCV stores each marker's 6x6 payload rotated by 180 degrees relative to the
canonical tag36h11 code words; reading the rotated grid row-major, most
significant bit first, yields the published values (code 0 = 0xd5d628584).
"""
import sys
from pathlib import Path

import cv2
import numpy as np


def main(out: Path) -> None:
    d = cv2.aruco.getPredefinedDictionary(cv2.aruco.DICT_APRILTAG_36h11)
    lines = ["family=tag36h11 bits=36 hamming=11"]
    for i in range(d.bytesList.shape[0]):
        bits = cv2.aruco.Dictionary.getBitsFromByteList(d.bytesList[i : i + 1], 6)
        value = 0
        for b in np.rot90(bits, 2).ravel():
            value = (value << 1) | int(b)
        lines.append(f"{value:09x}")
    out.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("src/ipt/data/tag36h11.txt"))

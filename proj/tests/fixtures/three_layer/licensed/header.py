# Copyright (C) 2015 Example Authors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.

def checksum(data):
    total = 0
    for index, value in enumerate(data):
        total = (total + (index + 1) * value) % 65521
    return total

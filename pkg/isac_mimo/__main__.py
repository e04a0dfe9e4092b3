# -*- coding: utf-8 -*-
import sys

from isac_mimo.cli import main

sys.exit(main())

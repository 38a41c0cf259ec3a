import sys
from ctxseq.cli import main
sys.exit(main())

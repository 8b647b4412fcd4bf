from .protocol import main

raise SystemExit(main())

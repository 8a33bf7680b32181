# neg solution 1
n, y = map(int, input().split())
print(0 - n)
